"""Default constants."""

# Enumeration of [K]^n candidates for exact Exponential Mechanism and audits.
ENUMERATION_CAP = 20_000_000
ENUMERATION_CHUNK = 1 << 16

# Degree envelope G_C and assumption constants. None of these have a pinned value
# in the analysis; they are configuration knobs.
ENVELOPE_C = 10.0
C_SIGNAL = 1.0
C_MILD_GROWTH = 1.0
C0 = 1.0
C1 = 1.0
C3 = 1.0
DEFAULT_W = 0.5

# Tolerances.
PRIVACY_TOL = 1e-9
LEMMA_TOL = 1e-12

# Caps for exact combinatorics.
COVER_EDGE_CAP = 40
TAIL_PAIR_CAP = 25
AUDIT_N_CAP = 6
GROUP_AUDIT_N_CAP = 5
GRAPH_LAW_N_CAP = 6
UNIFORM_REJECTION_TRIES = 100_000

# Samplers.
CHAIN_STEPS = 10_000
SWAP_PROB = 0.5
ANNEAL_ETA = 50.0

# Reporting.
CI_LEVEL = 0.99
FLOAT_DIGITS = 17
SCHEMA_VERSION = 1
PEELING_UNDERFLOW = 1e-300
