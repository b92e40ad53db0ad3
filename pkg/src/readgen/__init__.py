"""Document-grounded conversation modeling: MRC-style encoder, attentional
recurrent decoder, data-weighted training, and an automatic metric suite."""

__version__ = "0.1.0"
