"""Open-set RF fingerprint identification.

Synthesizes impaired LoRa preamble packets, turns them into dB
spectrograms, trains an identity prediction network plus a siamese
comparison network, and decides per packet whether it comes from an
enrolled device or a rogue transmitter.
"""

__version__ = "0.1.0"
