########################################
#          Configuration File          #
########################################

VERSION = "1.0.0"

# Tokenizer grid
TOKEN_LOW = -10.0
TOKEN_HIGH = 10.0
TOKEN_DECIMALS = 2  # grid step 0.01
MASK_ID = 0
FIRST_VALUE_ID = 1
VOCAB_SIZE = 2002  # 2001 value tokens + MASK

# Model defaults
LAYERS = 4
HEADS = 8
HIDDEN = 256
MLP_RATIO = 4
LAYER_NORM_EPS = 1e-12
INIT_STD = 0.02

# Training defaults
BATCH_SIZE = 256
STEPS = 50000
LEARNING_RATE = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
P_MASK = 0.3
CHECKPOINT_EVERY = 1000
CHECKPOINT_STEPS = (1000, 4000, 14000)  # steps analysed in the copying-phase experiments
PREFETCH = 2
LOG_EVERY = 100

# Model components (trainable / switchable groups of weights)
COMPONENTS = ("attention", "attention_qkv", "mlp", "positional_embeddings", "token_embeddings", "head")
RETRAIN_COMPONENTS = ("attention", "mlp", "positional_embeddings", "token_embeddings", "head")

# Factor distributions for U, V: (family, parameter)
DISTRIBUTIONS = {
    "uniform": ("uniform", 1.0),  # Unif[-1, 1]
    "normal": ("normal", 1.0),  # N(0, 1)
    "normal-0.25": ("normal", 0.5),  # N(0, 0.25), variance 0.25
    "laplace-0.25": ("laplace", 0.25),  # Laplace(0, 0.25), (mean, scale)
}

# Named training presets
PRESETS = {
    "desk": {"n": 5, "r": 1, "layers": 4, "heads": 8, "hidden": 128, "steps": 20000},
    "full": {"n": 7, "r": 2, "layers": 4, "heads": 8, "hidden": 256, "steps": 50000},
    "full-12layer": {"n": 7, "r": 2, "layers": 12, "heads": 12, "hidden": 384, "steps": 50000},
    "rank-sweep": {"n": 10, "r": 1, "layers": 12, "heads": 12, "hidden": 384, "steps": 50000},
}

# Drop detection
DROP_WINDOW = 100
DROP_THRESHOLD = 0.5  # log10 units
DROP_LOOKBACK = 2000  # steps of plateau a candidate drop is measured against
DROP_SPREAD = 0.25  # widest 10-90 percentile band of a plateau, log10 units

# Nuclear norm baseline
SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 50000
ADMM_RHO = 1.0
PROX_STEP_FRACTION = 0.45  # stepsize = fraction * |Omega|
LAMBDA_GRID = (0.0005, 0.001, 0.0015, 0.002, 0.005)
P_MASK_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)

# Interpretability
HEAD_OTHER_FACTOR = 2.0  # "other" below this multiple of the uniform baseline
PROBE_RIDGE = 1e-3
PROBE_TRAIN_FRACTION = 0.8
EMBED_GRID = (-1.5, 1.5)

# Files
METRICS_FILE = "metrics.csv"
METRICS_HEADER = ("step", "L", "L_obs", "L_mask")
MANIFEST_FILE = "manifest.json"
WEIGHTS_FILE = "weights.bin"
CHECKPOINT_DIR = "checkpoints"

# Logging
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Head groups labelled on a reference 4x8 checkpoint, (layer, head) 1-indexed
HEAD_GROUPS = {
    "row": ((2, 1), (3, 4), (4, 8)),
    "identity": ((4, 3), (4, 4)),
    "column": ((2, 2), (2, 3), (2, 4), (2, 6), (3, 2), (3, 3), (3, 5), (3, 1), (3, 6)),
    "layer2-rest": ((2, 5), (2, 7), (2, 8)),
    "layer1": ((1, 1), (1, 2), (1, 5), (1, 6), (1, 7), (1, 8)),
    "unlabelled": ((3, 3), (4, 2), (4, 5), (4, 6), (4, 7)),
}

# reproduce suites, and the short identifiers accepted for them
SUITE_NAMES = ("loss-drop", "vs-nucnorm", "copying", "pre-drop-attention", "post-drop-attention", "nucnorm-baseline",
               "negation-patch", "head-groups", "probes", "embeddings", "component-retrain", "rank-sweep",
               "distribution-shift")
SUITE_ALIASES = {
    "fig2": "loss-drop",
    "fig3": "vs-nucnorm",
    "table1": "copying",
    "sec312": "pre-drop-attention",
    "sec321": "post-drop-attention",
    "appB": "nucnorm-baseline",
    "appF": "negation-patch",
    "appJ": "head-groups",
    "fig6": "probes",
    "fig5": "embeddings",
    "fig7": "component-retrain",
    "fig13": "rank-sweep",
    "appH": "distribution-shift",
}
