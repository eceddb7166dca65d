"""Map from modelled topics to the operations implementing them and the tests covering them.

Each row names operations as ``module.attribute`` and tests as ``file::test``;
``tests/test_trace.py`` checks that every name resolves.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TraceEntry:
    topic: str
    operations: tuple[str, ...]
    tests: tuple[str, ...]


TRACE: tuple[TraceEntry, ...] = (
    TraceEntry("first-order negative log-likelihood loss",
               ("family.nll", "train.data_terms", "train.batch_loss"),
               ("test_family.py::test_nll_examples", "test_acceptance.py::test_criterion_02_gradient_fidelity")),
    TraceEntry("inner loss: NLL of the predictive distribution",
               ("second_order.predictive", "second_order.predictive_nll", "train.data_terms"),
               ("test_second_order.py::test_predictive_nll_examples",
                "test_acceptance.py::test_criterion_01_closed_forms_vs_monte_carlo")),
    TraceEntry("outer loss: expected first-order NLL under the second-order distribution",
               ("second_order.expected_nll", "train.data_terms"),
               ("test_second_order.py::test_expected_nll_examples",
                "test_acceptance.py::test_criterion_01_closed_forms_vs_monte_carlo")),
    TraceEntry("entropy and KL-to-uniform regularizers",
               ("second_order.entropy", "second_order.kl", "train.regularizer_terms"),
               ("test_second_order.py::test_kl_to_uniform_is_negative_entropy_plus_constant",
                "test_train.py::test_kl_to_uniform_matches_negative_entropy_gradient")),
    TraceEntry("reference second-order distribution from refitted first-order models",
               ("reference.estimate", "reference.band", "reference.empirical_cdf"),
               ("test_reference.py::test_constant_task_lln", "test_reference.py::test_spread_shrinks_with_n")),
    TraceEntry("inner-loss minimizer is not unique",
               ("second_order.predictive", "second_order.gamma_from_negbinomial"),
               ("test_acceptance.py::test_criterion_04_non_injectivity",
                "test_acceptance.py::test_criterion_08_regression")),
    TraceEntry("outer-loss minimizer collapses to a point mass",
               ("second_order.expected_nll", "train.fit"),
               ("test_acceptance.py::test_criterion_03_jensen_ordering",
                "test_acceptance.py::test_criterion_05_dirac_collapse")),
    TraceEntry("regularization bounds the pseudo-counts and the run-to-run spread",
               ("train.regularizer_terms", "train.fit"),
               ("test_acceptance.py::test_criterion_05_dirac_collapse",
                "test_acceptance.py::test_criterion_08_regression")),
    TraceEntry("entropies of Dirichlet, Normal-Inverse-Gamma and Gamma",
               ("second_order.entropy", "oracles.dirichlet_entropy_mutant"),
               ("test_acceptance.py::test_criterion_10_entropy_formulas",
                "test_oracles.py::test_entropy_mutant_fails_mc_oracle")),
    TraceEntry("predictive marginals: Categorical, Student-t, Negative Binomial",
               ("second_order.predictive", "second_order.StudentT", "second_order.NegBinomial"),
               ("test_second_order.py::test_predictive_examples",
                "test_second_order.py::test_predictive_nll_nig_monte_carlo")),
    TraceEntry("convexity of the inner loss for linear feature maps",
               ("oracles.segment_convexity_gap", "train.batch_loss"),
               ("test_acceptance.py::test_criterion_09_convexity_probes",)),
    TraceEntry("closed-form expected log-likelihoods",
               ("second_order.expected_nll",),
               ("test_second_order.py::test_expected_nll_monte_carlo",
                "test_acceptance.py::test_criterion_01_closed_forms_vs_monte_carlo")),
    TraceEntry("classification simulation: sine-shaped Bernoulli rate on [0, 0.5]",
               ("datagen.ClsSine", "datagen.generate", "experiments.run_bands", "experiments.run_faithfulness"),
               ("test_datagen.py::test_cls_sine_outcome_mean_clt",
                "test_acceptance.py::test_criterion_06_faithfulness_gap",
                "test_acceptance.py::test_criterion_07_band_reproduction")),
    TraceEntry("regression simulation: cubic mean with Gaussian noise",
               ("datagen.RegCubic", "experiments.run_trajectories"),
               ("test_datagen.py::test_reg_cubic_noise_variance_clt",
                "test_cli.py::test_reproduce_regression_figures",
                "test_acceptance.py::test_criterion_08_regression")),
    TraceEntry("epistemic uncertainty measures",
               ("second_order.epistemic_measures", "second_order.mutual_information"),
               ("test_second_order.py::test_epistemic_examples",
                "test_second_order.py::test_mutual_information_monte_carlo")),
    TraceEntry("faithfulness: Wasserstein-1 distance to the reference",
               ("evaluation.wasserstein1", "evaluation.faithfulness_sweep", "evaluation.moment_fit"),
               ("test_evaluation.py::test_w1_against_quadrature",
                "test_acceptance.py::test_criterion_06_faithfulness_gap")),
)
