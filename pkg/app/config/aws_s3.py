# app/config/aws_s3.py
import json
import logging
import os

import boto3

from app.config.settings import AWS_REGION

logger = logging.getLogger(__name__)

_s3_client = None


def get_s3_client():
    """Lazily create the shared boto3 S3 client."""
    global _s3_client
    if _s3_client is None:
        _s3_client = boto3.client("s3", region_name=AWS_REGION)
    return _s3_client


def is_s3_uri(path: str) -> bool:
    return str(path).startswith("s3://")


def split_s3_uri(uri: str) -> tuple[str, str]:
    """
    Split an s3://bucket/key URI.

    Returns:
        tuple: (bucket, key)
    """
    if not is_s3_uri(uri):
        raise ValueError(f"Not an S3 URI: {uri}")
    bucket, _, key = uri[len("s3://"):].partition("/")
    if not bucket or not key:
        raise ValueError(f"S3 URI needs both bucket and key: {uri}")
    return bucket, key


def read_json_from_s3(bucket: str, key: str) -> dict:
    """
    Reads a JSON document (e.g. a case file) from S3.

    Args:
        bucket (str): S3 bucket name
        key (str): S3 object key

    Returns:
        dict: parsed JSON content
    """
    s3 = get_s3_client()
    try:
        obj = s3.get_object(Bucket=bucket, Key=key)
        return json.loads(obj["Body"].read())
    except s3.exceptions.NoSuchKey:
        logger.error(f"❌ S3 key not found: s3://{bucket}/{key}")
        raise FileNotFoundError(f"s3://{bucket}/{key}")


def upload_artifacts_to_s3(paths: list[str], bucket: str, prefix: str) -> list[str]:
    """
    Upload run artifacts (CSV / text files) under a common prefix.

    Args:
        paths (list): local file paths
        bucket (str): S3 bucket name
        prefix (str): folder/prefix path

    Returns:
        list: keys that were uploaded successfully
    """
    s3 = get_s3_client()
    uploaded = []
    for path in paths:
        key = f"{prefix.rstrip('/')}/{os.path.basename(path)}"
        content_type = "text/csv" if path.endswith(".csv") else "text/plain"
        try:
            with open(path, "rb") as fh:
                s3.put_object(Bucket=bucket, Key=key, Body=fh.read(), ContentType=content_type)
            uploaded.append(key)
            logger.info(f"✅ Uploaded to s3://{bucket}/{key}")
        except Exception as e:
            logger.error(f"❌ Upload failed for {path}: {e}")
    return uploaded
