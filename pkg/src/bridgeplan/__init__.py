"""Task-conditioned motion planning with Schrödinger-bridge flows."""
