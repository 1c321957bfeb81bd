"""Test suite for Macbeath DAG."""
