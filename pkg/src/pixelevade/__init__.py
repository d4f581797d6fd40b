"""pixelevade: RL pixel-evasion attacks against a small CNN classifier under
four confidence-disclosure scenarios, including a Dirichlet noise defense."""

from .analytics import (AnalysisConfig, EpisodeRecord, average_actions_to_fool,
                        best_scenario_per_class, compute_metrics,
                        lifetime_success_rate, scenario_count_summary)
from .classifier import (ClassifierModel, TrainReport, load_model, save_model,
                         train_classifier)
from .dataset import (CorpusConfig, ImageSet, LabeledImage, NormalizationSpec,
                      generate_corpus, ingest_directory, normalize)
from .env import (ACTION_COUNT, MAX_STEPS, EvasionEnv, decode_action,
                  encode_action, episode_return)
from .oracle import (DefenseConfig, DisclosureResponse, Oracle,
                     randomize_confidences, Scenario)
from .ppo import (ActorCritic, PpoConfig, collect_rollouts, compute_gae,
                  evaluate_random_policy, ppo_loss, ppo_update, train_attacker)

__version__ = "0.1.0"
