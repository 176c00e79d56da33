//! Models, prototypes and reports survive a trip through the on-disk
//! formats unchanged.

use zsl_core::eval::Space;
use zsl_core::io::{self, gen_synthetic, RunConfig, SynthConfig};
use zsl_core::pipeline;
use zsl_core::transfer::Provenance;

#[test]
fn files_reproduce_in_memory_results() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        c_s: 6,
        c_u: 3,
        n_per_class: 10,
        scales: 2,
        ..SynthConfig::default()
    };
    let data = gen_synthetic(&synth).unwrap();
    io::write_synthetic(&data, &synth, tmp.path()).unwrap();

    let cfg = RunConfig::load(&tmp.path().join("run.json")).unwrap();
    let ds = io::load_dataset(&cfg).unwrap();
    assert_eq!(ds.scales[1].features, data.scales[1].features);

    let mut pcfg = cfg.pipeline.clone();
    pcfg.train.epochs = 5;
    let trained = pipeline::fit(&ds, &pcfg).unwrap();
    let transfer = pipeline::fit_transfer(&ds, &trained, &pcfg).unwrap();
    io::save_trained(&cfg.output_dir, &trained).unwrap();
    io::save_transfer(&cfg.output_dir, &transfer).unwrap();

    let loaded = io::load_trained(&cfg.output_dir, 2).unwrap();
    assert_eq!(loaded.models, trained.models);
    assert_eq!(loaded.combiner, trained.combiner);
    assert_eq!(loaded.holdout_indices, trained.holdout_indices);
    let loaded_t = io::load_transfer(&cfg.output_dir, &ds.split).unwrap();
    assert_eq!(loaded_t, transfer);
    assert_eq!(
        loaded_t.unseen.uniform_provenance(),
        Some(Provenance::Transferred)
    );
    assert_eq!(
        loaded_t.seen.uniform_provenance(),
        Some(Provenance::EmpiricalMean)
    );

    for space in [Space::Ua, Space::La, Space::UaLa] {
        let (_, a, ra) = pipeline::evaluate_zsl(&ds, &trained, &transfer, space, &pcfg).unwrap();
        let (_, b, rb) = pipeline::evaluate_zsl(&ds, &loaded, &loaded_t, space, &pcfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let ga = pipeline::evaluate_gzsl(&ds, &trained, &transfer, space, &pcfg).unwrap();
        let gb = pipeline::evaluate_gzsl(&ds, &loaded, &loaded_t, space, &pcfg).unwrap();
        assert_eq!(ga, gb);
    }
}

#[test]
fn run_config_round_trips_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        c_s: 3,
        c_u: 2,
        n_per_class: 2,
        ..SynthConfig::default()
    };
    let written = io::write_synthetic(&gen_synthetic(&synth).unwrap(), &synth, tmp.path()).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("run.json")).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), written);

    // the seed is mandatory
    let without_seed = text.replace("\"seed\"", "\"unused\"");
    assert!(matches!(
        RunConfig::from_json(&without_seed),
        Err(zsl_core::ZslError::Config(_))
    ));
}
