"""Classifier comparison harness for the ualab window dataset."""
