//! Experiment configuration, multi-seed runs, sweeps and reports.

mod config;
mod report;
mod result;
mod runner;
mod sweep;

pub use config::{ExperimentConfig, Profile, BENCHMARKS};
pub use report::{bar_chart_svg, compare, compare_csv, percent, sample_curve_svg};
pub use result::{mask_wallclock, RunResult, SeedResult, CSV_HEADER, SAMPLES_CSV_HEADER};
pub use runner::{load_data, run, run_seed, run_with_data};
pub use sweep::{default_grid, grid_points, parse_grid, sweep, sweep_with, GridAxis, SweepOutcome, SweepPoint};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::stream::{Method, Protocol};

    fn tiny(method: Method) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_profile(Profile::Ci);
        c.method = method;
        c.benchmark = "split_patterns".into();
        c.seeds = vec![0];
        c.iterations_per_task = 30;
        c.batch_size = 16;
        c.hidden = vec![32];
        c.gc_hidden = vec![16];
        c.latent_dim = 2;
        c.sub_batch = 16;
        c.samples = 10;
        c.eval_subsample = Some(300);
        c
    }

    fn fake(method: Method, bench: &str, accs: &[f64]) -> RunResult {
        let seeds: Vec<SeedResult> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| SeedResult {
                seed: i as u64,
                accuracy: a,
                last_task_fraction: 0.5,
                wallclock_s: 1.25,
                trace: vec![0.9, a],
                sample_sweep: vec![(1, a - 0.01), (10, a)],
                warnings: vec!["posterior sigma floor applied 2 times".into()],
            })
            .collect();
        let (mean, sem) = crate::stream::aggregate_runs(accs).unwrap();
        RunResult {
            config_hash: "00ff".into(),
            method,
            benchmark: bench.into(),
            seeds,
            mean,
            sem,
        }
    }

    #[test]
    fn defaults_match_mnist_settings() {
        let c = ExperimentConfig::default();
        assert_eq!((c.iterations_per_task, c.batch_size), (2000, 128));
        assert_eq!(c.seeds, (0..10).collect::<Vec<u64>>());
        assert_eq!((c.gc_hidden.clone(), c.latent_dim, c.sub_batch), (vec![85, 85], 5, 64));
        assert_eq!(c.hidden, vec![400, 400]);
        assert_eq!((c.ewc_lambda, c.si_lambda, c.ar1_lambda, c.omega_max), (1e6, 1e3, 10.0, 0.01));
        let ci = ExperimentConfig::for_profile(Profile::Ci);
        assert_eq!((ci.iterations_per_task, ci.samples, ci.eval_subsample), (200, 100, Some(2000)));
    }

    #[test]
    fn config_text_round_trips() {
        let mut c = tiny(Method::Ar1);
        c.fisher_n = Some(500);
        c.sample_sweep = vec![1, 10];
        let back = ExperimentConfig::parse(&c.to_text(), Profile::Paper).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn key_order_does_not_change_hash() {
        let a = "method = si\nseeds = 1,2\n[method]\nsi_lambda = 100\nlr = 0.01\n[benchmark]\nbatch_size = 64\n";
        let b = "[benchmark]\nbatch_size = 64\n[method]\nlr = 0.01\nsi_lambda = 100\n[]\nseeds = 1,2\nmethod = si\n";
        let (ca, cb) = (ExperimentConfig::parse(a, Profile::Paper).unwrap(), ExperimentConfig::parse(b, Profile::Paper).unwrap());
        assert_eq!(ca.hash(), cb.hash());
        let mut cc = ca.clone();
        cc.si_lambda = 1000.0;
        assert_ne!(cc.hash(), ca.hash());
        cc = ca.clone();
        cc.out = Some("elsewhere".into());
        assert_eq!(cc.hash(), ca.hash());
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::parse("colour = red", Profile::Paper), Err(Error::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("[model]\nx = 1", Profile::Paper), Err(Error::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("method = magic", Profile::Paper), Err(Error::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("seeds = ", Profile::Paper), Err(Error::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("[method]\nsamples = 0", Profile::Paper), Err(Error::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("no equals sign", Profile::Paper), Err(Error::Usage(_))));
    }

    #[test]
    fn profile_key_applies_first() {
        let c = ExperimentConfig::parse("[benchmark]\niterations_per_task = 7\n[]\nprofile = ci\n", Profile::Paper).unwrap();
        assert_eq!(c.iterations_per_task, 7);
        assert_eq!(c.samples, 100);
    }

    #[test]
    fn incompatible_protocol_fails_before_training() {
        let mut c = tiny(Method::Ewc);
        c.protocol = Protocol::TaskBasedStreaming;
        assert!(matches!(run(&c, None), Err(Error::Protocol(_))));
    }

    #[test]
    fn gc_run_single_seed_has_zero_sem() {
        let mut c = tiny(Method::GenerativeClassifier);
        c.sample_sweep = vec![1, 10];
        c.iterations_per_task = 300;
        let dir = tempfile::tempdir().unwrap();
        let r = run(&c, Some(dir.path())).unwrap();
        assert_eq!(r.seeds.len(), 1);
        assert_eq!(r.sem, 0.0);
        assert!(r.mean > 0.9, "{}", r.mean);
        assert_eq!(r.seeds[0].sample_sweep.iter().map(|s| s.0).collect::<Vec<_>>(), vec![1, 10]);
        assert_eq!(r.seeds[0].sample_sweep[1].1, r.mean);
        assert!(dir.path().join("seed-0").join("manifest.txt").is_file());
    }

    #[test]
    fn identical_configs_give_identical_csv() {
        for method in [Method::None, Method::Slda, Method::GenerativeClassifier] {
            let mut c = tiny(method);
            c.seeds = vec![3, 1];
            let a = run(&c, None).unwrap();
            let b = run(&c, None).unwrap();
            assert_eq!(mask_wallclock(&a.to_csv()), mask_wallclock(&b.to_csv()));
            assert_eq!(a.seeds[0].seed, 1);
        }
    }

    #[test]
    fn trace_has_one_entry_per_task() {
        let mut c = tiny(Method::CwrPlus);
        c.trace = true;
        let r = run(&c, None).unwrap();
        assert_eq!(r.seeds[0].trace.len(), 5);
        assert_eq!(*r.seeds[0].trace.last().unwrap(), r.mean);
    }

    #[test]
    fn every_method_runs_on_patterns() {
        for method in Method::ALL {
            let r = run(&tiny(method), None).unwrap();
            assert!((0.0..=1.0).contains(&r.mean), "{}", method.as_str());
        }
    }

    #[test]
    fn result_record_round_trips() {
        let r = fake(Method::GenerativeClassifier, "split_mnist", &[0.93, 0.94]);
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path()).unwrap();
        assert_eq!(RunResult::load(dir.path()).unwrap(), r);
        assert!(dir.path().join("samples.csv").is_file());
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(r.sample_curve().unwrap().len(), 2);
        assert!(matches!(RunResult::load(&dir.path().join("missing")), Err(Error::Manifest(_))));
    }

    #[test]
    fn wallclock_mask_blanks_only_that_column() {
        let csv = "method,benchmark,seed,accuracy,wallclock_s,config_hash\nnone,b,0,0.5,12.000,ab\n";
        assert_eq!(
            mask_wallclock(csv),
            "method,benchmark,seed,accuracy,wallclock_s,config_hash\nnone,b,0,0.5,-,ab"
        );
    }

    #[test]
    fn sweep_single_point_and_ties() {
        let base = tiny(Method::Si);
        let one = parse_grid("si_lambda=5").unwrap();
        let out = sweep_with(&base, &one, |_| Ok(0.5)).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.best_config.si_lambda, 5.0);
        let two = parse_grid("si_lambda=1,2").unwrap();
        let out = sweep_with(&base, &two, |_| Ok(0.7)).unwrap();
        assert_eq!(out.best, 0);
        assert_eq!(out.best_config.si_lambda, 1.0);
        let out = sweep_with(&base, &two, |c| Ok(c.si_lambda)).unwrap();
        assert_eq!(out.best, 1);
        assert!(out.table().lines().nth(2).unwrap().ends_with(",true"));
        assert!(matches!(parse_grid(""), Err(Error::Usage(_))));
        assert!(matches!(parse_grid("si_lambda="), Err(Error::Usage(_))));
    }

    #[test]
    fn sweep_uses_first_seed_only() {
        let mut base = tiny(Method::Si);
        base.seeds = vec![4, 5, 6];
        let out = sweep_with(&base, &parse_grid("si_lambda=1;si_xi=0.1,0.2").unwrap(), |c| {
            assert_eq!(c.seeds, vec![4]);
            Ok(c.si_xi)
        })
        .unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.points[1].assignments[1], ("si_xi".to_string(), "0.2".to_string()));
    }

    #[test]
    fn default_grids() {
        let si = default_grid(Method::Si).unwrap();
        assert_eq!(si[0].values.len(), 14);
        assert_eq!(si[0].values[..3], ["0", "0.001", "0.01"]);
        assert_eq!(si[0].values.last().unwrap(), "1000000000");
        let ewc = default_grid(Method::Ewc).unwrap();
        assert_eq!(ewc[0].values[..2], ["0", "0.1"]);
        assert_eq!(ewc[0].values.last().unwrap(), "10000000");
        let ar1 = default_grid(Method::Ar1).unwrap();
        assert_eq!(ar1[1].values.first().unwrap(), "0.0001");
        assert_eq!(ar1[1].values.last().unwrap(), "100");
        assert_eq!(grid_points(&ar1).len(), 14 * 7);
        assert!(default_grid(Method::None).is_err());
    }

    #[test]
    fn compare_table_layout() {
        let a = fake(Method::GenerativeClassifier, "split_mnist", &[0.9379]);
        let b = fake(Method::None, "split_mnist", &[0.19, 0.21]);
        assert_eq!(percent(0.9379), "93.79");
        let t = compare(&[a.clone(), b.clone()]).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("None"));
        assert!(lines[3].contains("93.79 (± 0.00)"));
        assert_eq!(compare(&[a.clone()]).unwrap().lines().count(), 3);
        let csv = compare_csv(&[a.clone(), b]).unwrap();
        assert!(csv.contains("generative_classifier,split_mnist,93.79,0.00,1"));
        let c = fake(Method::Joint, "split_patterns", &[0.5]);
        assert!(matches!(compare(&[a, c]), Err(Error::Usage(_))));
        assert!(matches!(compare(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn svg_charts_are_well_formed() {
        let r = fake(Method::Slda, "split_mnist", &[0.873]);
        let svg = bar_chart_svg(&[r.clone()]).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<svg").count(), 1);
        assert!(svg.contains("87.30"));
        assert!(matches!(bar_chart_svg(&[]), Err(Error::Usage(_))));
        let curve = sample_curve_svg(&r.sample_curve().unwrap()).unwrap();
        assert!(curve.contains("<polyline"));
        assert!(matches!(sample_curve_svg(&[]), Err(Error::Usage(_))));
    }
}
