"""recstack: an end-to-end in-session recommendation pipeline for shops
that measure their data in gigabytes, not petabytes.

The package is organized along the pipeline:

    ingest -> rawstore -> transform -> quality -> recsys -> serving
                                 orchestrator drives the whole flow
    datagen provides a deterministic synthetic shopper for testing

Every stage is usable on its own; the `recstack` CLI wires them together.
"""

__version__ = "0.1.0"
