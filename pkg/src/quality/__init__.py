"""Structure and content quality of generated explanations."""
