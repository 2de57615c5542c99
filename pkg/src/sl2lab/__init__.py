"""Random SL(2,R) products, Schrodinger embeddings and spectral regularity."""

__version__ = "0.1.0"
