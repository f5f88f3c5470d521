"""Dataset ingestion, deterministic splits and the synthetic pipe-scan generator."""
