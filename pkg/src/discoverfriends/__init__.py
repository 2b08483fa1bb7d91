"""Secure friend discovery, group messaging and anonymous check-ins.

Subpackages by concern:

- bloom: sized Bloom filters with murmur3 double hashing and XOR masks
- identity: confidential IDs, composite digests, identity-derived keys
- crypto: authenticated AES, RSA key wrap, fixed-layout certificates
- keymgmt: key/certificate repositories and the trust-graph admission gate
- protocol: the five-stage discovery and messaging exchange
- fss: p-party point-function secret sharing and epoch servers
- netsim: deterministic discrete-event multi-hop network simulation
- scenarios / cli: reproducible scenario runs and reports
"""

__version__ = "0.1.0"
