from tweetframe.models.baseline import AuthorIndex, BaselineClassifier, featurize_baseline, train_baseline
from tweetframe.models.encoder import CheckpointError, TweetClassifier, load_encoder
from tweetframe.models.mathops import (
    OptimizerHyper,
    OptimizerState,
    adamw_step,
    cross_entropy,
    head_loss_and_grad,
    softmax,
)
from tweetframe.models.optim import DecoupledAdamW
from tweetframe.models.trainer import (
    EarlyStopping,
    ExperimentReport,
    FrozenEncoderError,
    Prediction,
    TrainedModel,
    TrialResult,
    predict_batch,
    run_experiment,
    run_trial,
)
