"""Rich terminal rendering for the pathrank CLI."""
