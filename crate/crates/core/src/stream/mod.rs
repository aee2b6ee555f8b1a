//! Datasets, class-incremental streams, benchmark protocols and metrics.

mod benchmark;
mod dataset;
mod eval;
mod idx;

pub use benchmark::{make_stream, Benchmark, Protocol, Sampling, Stream, StreamEvent};
pub use dataset::{make_block_patterns, make_synthetic_gaussian, Dataset, Split};
pub use eval::{aggregate_runs, evaluate_accuracy, evaluate_on, evaluation_indices, CompatibilityMatrix, Evaluation, Method};
pub use idx::{load_mnist, load_mnist_dir, locate_mnist, parse_idx_images, parse_idx_labels};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::numerics::{Mat, Rng};

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [0x803u32, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [0x801u32, labels.len() as u32] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn idx_pixels_are_scaled() {
        let m = parse_idx_images(&idx_images(2, 1, 2, &[0, 255, 51, 102])).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 0), 0.2);
        assert_eq!(parse_idx_labels(&idx_labels(&[3, 9])).unwrap(), vec![3, 9]);
    }

    #[test]
    fn idx_label_file_with_image_magic() {
        let mut bytes = idx_labels(&[1, 2]);
        bytes[..4].copy_from_slice(&0x803u32.to_be_bytes());
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn idx_truncation_reports_offset() {
        let bytes = idx_images(2, 2, 2, &[1, 2, 3, 4, 5]);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format { offset: 21, .. })));
        assert!(matches!(parse_idx_images(&bytes[..10]), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn idx_count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        std::fs::write(p("a"), idx_images(2, 1, 1, &[0, 1])).unwrap();
        std::fs::write(p("b"), idx_labels(&[0, 1, 2])).unwrap();
        std::fs::write(p("c"), idx_images(1, 1, 1, &[0])).unwrap();
        std::fs::write(p("d"), idx_labels(&[0])).unwrap();
        assert!(matches!(load_mnist(&p("a"), &p("b"), &p("c"), &p("d")), Err(Error::Format { .. })));
        assert!(matches!(load_mnist(&p("a"), &p("missing"), &p("c"), &p("d")), Err(Error::Io(_))));
    }

    fn toy_dataset(classes: usize, per_class: usize) -> Dataset {
        let n = classes * per_class;
        let data: Vec<f64> = (0..n * 3).map(|i| (i % 7) as f64 / 7.0).collect();
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(Mat::from_vec(n, 3, data).unwrap(), labels, Split::Train, classes).unwrap()
    }

    fn toy_bench(protocol: Protocol) -> Benchmark {
        Benchmark {
            name: "toy".into(),
            tasks: vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            iterations_per_task: 7,
            batch_size: 4,
            protocol,
            sampling: Sampling::WithReplacement,
        }
    }

    #[test]
    fn split_mnist_event_counts() {
        let data = toy_dataset(10, 3);
        let stream = make_stream(&data, &Benchmark::split_mnist(), 1).unwrap();
        assert_eq!(stream.remaining(), 1_280_005);
        let (mut samples, mut bounds) = (0usize, 0usize);
        for ev in stream {
            match ev {
                StreamEvent::Sample { .. } => samples += 1,
                StreamEvent::TaskEnd { .. } => bounds += 1,
            }
        }
        assert_eq!((samples, bounds), (1_280_000, 5));
    }

    #[test]
    fn events_respect_the_partition() {
        let data = toy_dataset(6, 5);
        let bench = toy_bench(Protocol::TaskBasedBatch);
        let mut task = 0;
        for ev in make_stream(&data, &bench, 3).unwrap() {
            match ev {
                StreamEvent::Sample { x, y, index, task_id } => {
                    assert_eq!(task_id, Some(task));
                    assert!(bench.tasks[task].contains(&y));
                    assert_eq!(data.label(index), y);
                    assert_eq!(data.input(index), x);
                }
                StreamEvent::TaskEnd { task_id } => {
                    assert_eq!(task_id, task);
                    task += 1;
                }
            }
        }
        assert_eq!(task, 3);
    }

    #[test]
    fn streams_are_deterministic() {
        let data = toy_dataset(6, 5);
        let bench = toy_bench(Protocol::TaskBasedBatch);
        let a: Vec<_> = make_stream(&data, &bench, 3).unwrap().collect();
        let b: Vec<_> = make_stream(&data, &bench, 3).unwrap().collect();
        let c: Vec<_> = make_stream(&data, &bench, 4).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn task_free_is_erased_task_based() {
        let data = toy_dataset(6, 5);
        let erased: Vec<_> = make_stream(&data, &toy_bench(Protocol::TaskBasedStreaming), 8)
            .unwrap()
            .filter_map(|ev| match ev {
                StreamEvent::Sample { x, y, index, .. } => Some(StreamEvent::Sample {
                    x,
                    y,
                    index,
                    task_id: None,
                }),
                StreamEvent::TaskEnd { .. } => None,
            })
            .collect();
        let free: Vec<_> = make_stream(&data, &toy_bench(Protocol::TaskFree), 8).unwrap().collect();
        assert_eq!(free, erased);
    }

    #[test]
    fn epoch_sampling_visits_each_sample_once_per_pass() {
        let data = toy_dataset(2, 5);
        let bench = Benchmark {
            name: "toy".into(),
            tasks: vec![vec![0, 1]],
            iterations_per_task: 5,
            batch_size: 4,
            protocol: Protocol::TaskBasedBatch,
            sampling: Sampling::Epochs,
        };
        let idx: Vec<usize> = make_stream(&data, &bench, 1)
            .unwrap()
            .filter_map(|e| match e {
                StreamEvent::Sample { index, .. } => Some(index),
                _ => None,
            })
            .collect();
        for pass in idx.chunks(10) {
            let mut p = pass.to_vec();
            p.sort_unstable();
            assert_eq!(p, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn task_classes_are_balanced() {
        let data = toy_dataset(10, 20);
        let mut bench = Benchmark::split_mnist();
        bench.iterations_per_task = 200;
        let mut counts = [0f64; 10];
        for ev in make_stream(&data, &bench, 5).unwrap() {
            if let StreamEvent::Sample { y, .. } = ev {
                counts[y] += 1.0;
            }
        }
        // binomial(25600, ½) within each task
        let sd = (25_600.0f64 * 0.25).sqrt();
        for c in counts {
            assert!((c - 12_800.0).abs() < 3.0 * sd, "{c}");
        }
    }

    #[test]
    fn empty_class_is_protocol_error() {
        let data = Dataset::new(Mat::zeros(2, 1), vec![0, 0], Split::Train, 2).unwrap();
        let bench = Benchmark {
            tasks: vec![vec![0], vec![1]],
            ..toy_bench(Protocol::TaskBasedBatch)
        };
        assert!(matches!(make_stream(&data, &bench, 0).err(), Some(Error::Protocol(_))));
    }

    #[test]
    fn synthetic_single_class_and_zero_scale() {
        let mut rng = Rng::new(1, 1);
        let one = make_synthetic_gaussian(3, 1, 4.0, 50, Split::Train, &mut rng).unwrap();
        assert!(one.labels().iter().all(|&y| y == 0));
        assert!(one.inputs().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));

        let flat = make_synthetic_gaussian(2, 4, 0.0, 2000, Split::Test, &mut rng).unwrap();
        let means: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                let idx = flat.indices_of(&[c]);
                (0..2).map(|j| idx.iter().map(|&i| flat.input(i)[j]).sum::<f64>() / idx.len() as f64).collect()
            })
            .collect();
        for m in &means {
            assert!((m[0] - means[0][0]).abs() < 0.01 && (m[1] - means[0][1]).abs() < 0.01);
        }
    }

    #[test]
    fn synthetic_well_separated_is_nearly_perfect() {
        let mut rng = Rng::new(2, 2);
        let data = make_synthetic_gaussian(2, 2, 6.0, 5000, Split::Test, &mut rng).unwrap();
        // Bayes rule for shared isotropic noise: nearest true mean after the affine map
        let b = 11.0;
        let mean0 = [(6.0 + b) / (2.0 * b), 0.5];
        let mean1 = [0.5, (6.0 + b) / (2.0 * b)];
        let dist = |x: &[f64], m: &[f64; 2]| (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
        let ev = evaluate_accuracy(
            |x, _| Ok(if dist(x, &mean1) < dist(x, &mean0) { 1 } else { 0 }),
            &data,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(ev.accuracy > 0.99);
    }

    #[test]
    fn dataset_container_round_trip() {
        let data = make_synthetic_gaussian(3, 4, 2.0, 5, Split::Test, &mut Rng::new(3, 3)).unwrap();
        let bytes = data.to_bytes();
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), data);
        assert!(matches!(Dataset::from_bytes(&bytes[..40]), Err(Error::Format { .. })));
    }

    #[test]
    fn evaluation_examples() {
        let data = toy_dataset(10, 30);
        let mut rng = Rng::new(4, 4);
        let perfect = evaluate_accuracy(|_, i| Ok(data.label(i)), &data, None, &mut rng).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        let constant = evaluate_accuracy(|_, _| Ok(3), &data, None, &mut rng).unwrap();
        assert!((constant.accuracy - 0.1).abs() < 1e-12);
        let full = evaluate_accuracy(|x, _| Ok((x[0] * 70.0) as usize % 10), &data, Some(300), &mut rng).unwrap();
        let plain = evaluate_accuracy(|x, _| Ok((x[0] * 70.0) as usize % 10), &data, None, &mut rng).unwrap();
        assert_eq!(full, plain);
        let empty = Dataset::new(Mat::zeros(0, 3), vec![], Split::Test, 10).unwrap();
        assert!(matches!(evaluate_accuracy(|_, _| Ok(0), &empty, None, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn stratified_subsample_keeps_class_shares() {
        let labels: Vec<usize> = (0..1000).map(|i| if i < 700 { 0 } else { 1 + i % 3 }).collect();
        let data = Dataset::new(Mat::zeros(1000, 1), labels, Split::Test, 4).unwrap();
        let idx = data.stratified_indices(100, &mut Rng::new(1, 1)).unwrap();
        assert_eq!(idx.len(), 100);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(idx.iter().filter(|&&i| data.label(i) == 0).count(), 70);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_runs(&[0.5]).unwrap(), (0.5, 0.0));
        let (m, s) = aggregate_runs(&[0.4, 0.6]).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-12);
        assert_eq!(aggregate_runs(&[0.3, 0.3, 0.3]).unwrap().1, 0.0);
        assert!(matches!(aggregate_runs(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn compatibility_follows_the_protocol_table() {
        let m = CompatibilityMatrix::default();
        assert!(matches!(m.check(Method::Ewc, Protocol::TaskBasedStreaming), Err(Error::Protocol(_))));
        assert!(m.supports(Method::Ewc, Protocol::TaskBasedBatch));
        for p in Protocol::ALL {
            assert!(m.supports(Method::GenerativeClassifier, p));
            assert!(m.supports(Method::Slda, p));
        }
        for method in [Method::Si, Method::Dgr, Method::LabelsTrick, Method::Cwr, Method::CwrPlus, Method::Ar1] {
            assert!(m.supports(method, Protocol::TaskBasedBatch));
            assert!(m.supports(method, Protocol::TaskBasedStreaming));
            assert!(!m.supports(method, Protocol::TaskFree));
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.as_str()).unwrap(), m);
        }
        assert!(Method::parse("bi_r").is_err());
    }
}
