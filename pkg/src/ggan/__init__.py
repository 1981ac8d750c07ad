"""Semi-supervised GAN toolkit for SNP genotype profiles.

Pipeline: parse genotype CSVs, compare cohort allele frequencies via the
allelic frequency distance (AFD), select SNP subsets, train a GAN whose
discriminator carries a disease-label head and a real/fake head, then
evaluate with the T1/T2 procedures and generate synthetic cohorts.
"""

__version__ = "0.1.0"

from .errors import (
    ArtifactMismatchError,
    CheckpointError,
    ConfigError,
    DataMismatchError,
    GganError,
    MissingGenotypeError,
    NumericsError,
    ParseError,
    SpecError,
    TrainingDivergedError,
)
from .snp_data import (
    AlleleFrequencyTable,
    Genotype,
    GenotypeMatrix,
    SnpSubset,
    SubsetProvenance,
    afd,
    allele_frequencies,
    encode_profiles,
    labels_to_indices,
    parse_genotype_matrix,
    quantize_encoded,
    read_genotype_csv,
    read_snp_subset,
    select_snps_by_afd,
    select_snps_by_list,
    split_train_test,
    write_genotype_csv,
    write_snp_subset,
)
from .nn import (
    LayerSpec,
    NetworkSpec,
    backward,
    cross_entropy,
    cross_entropy_grad,
    describe,
    forward,
    init_parameters,
)
from .optim import AdamState, adam_step, init_adam
from .gradcheck import finite_diff_check
from .checkpoint import load_parameter_set, save_parameter_set
from .model import (
    GganModel,
    build_discriminator,
    build_generator,
    discriminate,
    generate,
    init_model,
    sample_noise,
)
from .training import (
    TrainConfig,
    TrainState,
    generator_step,
    history_jsonl,
    load_checkpoint,
    save_checkpoint,
    supervised_step,
    train,
    unsupervised_step,
)
from .evaluation import (
    EvalReport,
    T1Result,
    T2Result,
    decision_log,
    make_report,
    t1_evaluate,
    t2_evaluate,
    write_decision_log,
)
