# Ingest package initialization
