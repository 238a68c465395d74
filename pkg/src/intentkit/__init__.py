"""Intent compilation, attested signing and optimized execution on a simulated ledger."""
