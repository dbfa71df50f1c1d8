"""Policy iteration for the retrosynthesis game over synthetic reaction universes."""
