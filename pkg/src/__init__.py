"""XAI thesaurus pipeline."""
