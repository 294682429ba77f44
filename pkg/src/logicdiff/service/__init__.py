"""HTTP service wrapping the library: schemas, operations, FastAPI app."""
