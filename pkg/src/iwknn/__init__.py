"""WiFi fingerprint positioning with AP selection and asymmetric filtering."""
