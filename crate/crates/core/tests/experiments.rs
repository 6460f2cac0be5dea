use predopt_core::datagen::{gen_knapsack_data, gen_knapsack_instance, gen_truth_matrix, KnapsackGenParams};
use predopt_core::harness::{
    eval_optimality_gap, run_experiment, DiagnosticsConfig, ExperimentConfig, GapMode,
    KnapsackConfig, LossName, MulticlassConfig, PortfolioConfig, Study, TrainingConfig,
};
use predopt_core::predictor::fit_least_squares;

fn config(study: Study) -> ExperimentConfig {
    ExperimentConfig {
        study,
        m: 4,
        k: 3,
        n_list: vec![30, 60, 90],
        reps: 5,
        losses: vec![LossName::Ls, LossName::SpoPlus],
        seed: 99,
        output: "unused.csv".into(),
        training: TrainingConfig {
            steps: 40,
            step_size: None,
        },
        knapsack: KnapsackConfig {
            test_size: 100,
            ..Default::default()
        },
        multiclass: MulticlassConfig { test_size: 500 },
        portfolio: PortfolioConfig::default(),
        diagnostics: DiagnosticsConfig::default(),
    }
}

#[test]
fn noiseless_linear_knapsack_is_recovered_by_least_squares() {
    let dom = gen_knapsack_instance(10, 3).unwrap();
    let params = KnapsackGenParams {
        m: 10,
        k: 5,
        degree: 1,
        noise_halfwidth: 0.0,
        additive_noise: false,
        seed: 4,
    };
    let v0 = gen_truth_matrix(10, 5, 5);
    let train = gen_knapsack_data(&params, &v0, 500).unwrap();
    let test = gen_knapsack_data(&KnapsackGenParams { seed: 6, ..params }, &v0, 2000).unwrap();
    let (v, _) = fit_least_squares(&train).unwrap();
    let gap = eval_optimality_gap(&dom, &v, &test, GapMode::MeanRelative).unwrap();
    assert!(gap.value <= 1e-6, "relative gap {}", gap.value);
}

#[test]
fn row_count_is_losses_times_sizes_times_reps() {
    let t = run_experiment(&config(Study::Multiclass)).unwrap();
    assert_eq!(t.len(), 2 * 3 * 5);
    assert!(t.rows.iter().all(|r| r.value.is_finite() && r.value >= -1e-9));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let cfg = config(Study::Knapsack);
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap().to_csv_string())
    };
    assert_eq!(run_with(1), run_with(3));
}

#[test]
fn toml_config_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.csv");
    let path = dir.path().join("c.toml");
    std::fs::write(
        &path,
        format!(
            "study = \"portfolio\"\nm = 3\nk = 3\nn_list = [20, 40]\nreps = 2\nlosses = [\"ls\", \"spo_plus\"]\nseed = 1\noutput = {:?}\n[training]\nsteps = 20\n[portfolio]\nhorizon = 5\n",
            out
        ),
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let t = run_experiment(&cfg).unwrap();
    t.write(&cfg.output).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
}
