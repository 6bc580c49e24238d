"""Privacy-protected training with fast, audit-friendly unlearning.

Protect a training set (k-anonymity via microaggregation, or differential
privacy via Laplace/exponential mechanisms), pre-train a classifier on the
protected view, fine-tune on the raw data for deployment, and serve
forgetting requests by re-fine-tuning the protected base on the retain set.
Ships retrain-from-scratch and sharded (SISA) baselines plus
membership-inference evaluation.
"""

from .data import (
    AttributeSchema,
    EncodedMatrix,
    ForgetRequest,
    Provenance,
    TabularDataset,
    encode,
    decode,
    load_csv,
    parse_schema_file,
    split_forget,
    write_csv,
)
from .kanon import Clustering, centroid_replace, k_anonymize, mdav, verify_k_anonymity
from .dpanon import (
    CategoricalMechanism,
    MechanismSpec,
    PixelImage,
    dp_pix,
    dp_protect_table,
    exponential_select,
    laplace_sample,
    perturb_numeric,
)
from .mlp import (
    MlpModel,
    TrainConfig,
    accuracy,
    auc_utility,
    entropy_per_example,
    finetune,
    forward,
    init,
    load_model,
    loss_per_example,
    save_model,
    train,
)
from .attack import balanced_pair, mia_scores, roc_auc
from .unlearn import (
    EupgState,
    PrivacySpec,
    ShardStore,
    eupg_forget,
    eupg_prepare,
    retrain_scratch,
    sisa_forget,
    sisa_predict,
    sisa_train,
)

__version__ = "0.1.0"
