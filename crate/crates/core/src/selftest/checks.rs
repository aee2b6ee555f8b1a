use std::collections::BTreeMap;

use crate::baselines::SiState;
use crate::error::Result;
use crate::genclass::{importance_log_likelihood, GcConfig, GenerativeClassifier, PriorMode, ReconScale, VaeModel};
use crate::harness::{mask_wallclock, run, ExperimentConfig, Profile};
use crate::netcore::snapshot::snapshot_bytes;
use crate::netcore::{masked_cross_entropy, Activation, ActiveSet, DenseNet};
use crate::numerics::{Mat, Rng};
use crate::slda::{BiasConvention, SldaState};
use crate::stream::{make_block_patterns, make_stream, Benchmark, CompatibilityMatrix, Method, Protocol, Split, StreamEvent};

use super::oracles::{central_difference, rel_error};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => CheckOutcome::new(name, passed, detail),
            Err(e) => CheckOutcome::new(name, false, format!("error: {e}")),
        }
    }
}

fn max_rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| rel_error(*a, *n)).fold(0.0, f64::max)
}

fn ce_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed, 11);
    let width = 3 + rng.below(10);
    let widths = [width, 2 + rng.below(8), 2 + rng.below(8), 6];
    let net = DenseNet::new(&widths, &mut rng)?;
    let x = rng.standard_normal_vec(width);
    let active: ActiveSet = (0..2 + rng.below(5)).collect();
    let y = rng.below(active.len());
    let cache = net.forward(&x)?;
    let (_, g) = masked_cross_entropy(cache.output().row(0), y, &active)?;
    let analytic = net.backward(&cache, &Mat::from_vec(1, 6, g)?)?;
    let mut probe = net.clone();
    let fd = central_difference(
        |p| {
            probe.set_params(p).expect("same length");
            let out = probe.predict(&x).expect("valid input");
            masked_cross_entropy(&out, y, &active).expect("active label").0
        },
        net.params(),
        1e-5,
    );
    Ok(max_rel(&analytic, &fd))
}

fn elbo_gradient_error(seed: u64, scale: ReconScale) -> Result<f64> {
    let mut rng = Rng::new(seed, 10);
    let vae = VaeModel::new(5, &[4], 2, &mut rng)?;
    let batch = Mat::from_vec(3, 5, (0..15).map(|_| rng.uniform()).collect())?;
    let noise = Mat::from_vec(3, 2, rng.standard_normal_vec(6))?;
    let (_, grads) = vae.elbo_with_noise(&batch, &noise, scale)?;
    let loss = |v: &VaeModel| v.elbo_with_noise(&batch, &noise, scale).expect("valid batch").0.loss;
    let enc = central_difference(
        |p| {
            let mut v = vae.clone();
            v.encoder.set_params(p).expect("same length");
            loss(&v)
        },
        vae.encoder.params(),
        1e-5,
    );
    let dec = central_difference(
        |p| {
            let mut v = vae.clone();
            v.decoder.set_params(p).expect("same length");
            loss(&v)
        },
        vae.decoder.params(),
        1e-5,
    );
    Ok(max_rel(&grads.encoder, &enc).max(max_rel(&grads.decoder, &dec)))
}

fn si_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed, 12);
    let n = 8;
    let mut theta = rng.standard_normal_vec(n);
    let mut si = SiState::new(&theta, 2..7, 3.0, 0.1)?;
    for _ in 0..5 {
        let grad = rng.standard_normal_vec(n);
        let after: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - 0.1 * g).collect();
        si.accumulate(&theta, &after, &grad);
        theta = after;
    }
    si.consolidate(&theta);
    let probe: Vec<f64> = theta.iter().map(|t| t + rng.standard_normal()).collect();
    let (_, grad) = si.penalty(&probe);
    let fd = central_difference(|t| si.penalty(t).0, &probe, 1e-5);
    Ok(max_rel(&grad, &fd))
}

/// Analytic gradients of the cross-entropy, the ELBO with frozen noise and
/// the SI penalty against central differences.
pub fn gradient_checks() -> CheckOutcome {
    let r = (|| {
        let mut ce = 0.0f64;
        let mut elbo = 0.0f64;
        let mut si = 0.0f64;
        for seed in 0..8 {
            ce = ce.max(ce_gradient_error(seed)?);
            elbo = elbo.max(elbo_gradient_error(seed, ReconScale::Paper)?);
            elbo = elbo.max(elbo_gradient_error(seed, ReconScale::Exact)?);
            si = si.max(si_gradient_error(seed)?);
        }
        let worst = ce.max(elbo).max(si);
        Ok((worst < 1e-4, format!("max relative error: CE {ce:.2e}, ELBO {elbo:.2e}, SI {si:.2e}")))
    })();
    CheckOutcome::from_result("finite-difference gradients", r)
}

/// Streaming SLDA statistics against an element-by-element recurrence.
pub fn slda_recurrence_check() -> CheckOutcome {
    let r = (|| {
        let d = 4;
        let mut rng = Rng::new(6, 6);
        let init: Vec<Vec<f64>> = (0..10).map(|_| rng.standard_normal_vec(d)).collect();
        let mut s = SldaState::new(d, 1e-4, BiasConvention::Standard)?;
        for x in &init {
            s.update_mean(x, 0)?;
        }
        let batch: Vec<(&[f64], usize)> = init.iter().map(|x| (x.as_slice(), 0)).collect();
        s.init_covariance(&batch)?;

        let start = s.sigma();
        let mut sigma: Vec<Vec<f64>> = (0..d).map(|i| start.row(i).to_vec()).collect();
        let mut means: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
        let mut m0 = vec![0.0; d];
        for x in &init {
            for i in 0..d {
                m0[i] += x[i] / 10.0;
            }
        }
        means.insert(0, (m0, 10.0));
        let mut t = 10.0;
        for k in 0..1000 {
            let y = k % 3;
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.standard_normal() + y as f64).collect();
            s.update(&x, y)?;
            let fresh = !means.contains_key(&y);
            if fresh {
                means.insert(y, (x.clone(), 1.0));
            }
            let mu = means[&y].0.clone();
            for i in 0..d {
                for j in 0..d {
                    let delta = t / (t + 1.0) * (x[i] - mu[i]) * (x[j] - mu[j]);
                    sigma[i][j] = (t * sigma[i][j] + delta) / (t + 1.0);
                }
            }
            t += 1.0;
            if !fresh {
                let (m, n) = means.get_mut(&y).expect("inserted above");
                for i in 0..d {
                    m[i] = (*n * m[i] + x[i]) / (*n + 1.0);
                }
                *n += 1.0;
            }
        }
        let got = s.sigma();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((got.get(i, j) - sigma[i][j]).abs());
            }
        }
        for (y, (m, _)) in &means {
            let mine = s.mean(*y).expect("class seen");
            for (a, b) in mine.iter().zip(m) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok((worst < 1e-9, format!("max deviation {worst:.2e}")))
    })();
    CheckOutcome::from_result("SLDA streaming recurrence", r)
}

/// Closed-form two-class LDA with an explicit 2x2 inverse.
fn batch_lda(a: &[Vec<f64>], b: &[Vec<f64>], eps: f64) -> impl Fn(&[f64]) -> usize {
    let mean = |xs: &[Vec<f64>]| {
        let n = xs.len() as f64;
        [xs.iter().map(|x| x[0]).sum::<f64>() / n, xs.iter().map(|x| x[1]).sum::<f64>() / n]
    };
    let (ma, mb) = (mean(a), mean(b));
    let mut s = [[0.0; 2]; 2];
    for (xs, m) in [(a, ma), (b, mb)] {
        for x in xs {
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += (x[i] - m[i]) * (x[j] - m[j]);
                }
            }
        }
    }
    let n = (a.len() + b.len()) as f64;
    let c = [
        [(1.0 - eps) * s[0][0] / n + eps, (1.0 - eps) * s[0][1] / n],
        [(1.0 - eps) * s[1][0] / n, (1.0 - eps) * s[1][1] / n + eps],
    ];
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let inv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
    let lin = move |m: [f64; 2]| {
        let w = [inv[0][0] * m[0] + inv[0][1] * m[1], inv[1][0] * m[0] + inv[1][1] * m[1]];
        (w, -0.5 * (w[0] * m[0] + w[1] * m[1]))
    };
    let (wa, ba) = lin(ma);
    let (wb, bb) = lin(mb);
    move |x: &[f64]| {
        let sa = wa[0] * x[0] + wa[1] * x[1] + ba;
        let sb = wb[0] * x[0] + wb[1] * x[1] + bb;
        usize::from(sb > sa)
    }
}

/// Streaming SLDA predictions against batch LDA on a 41x41 grid.
pub fn slda_batch_check() -> CheckOutcome {
    let r = (|| {
        let mut rng = Rng::new(8, 8);
        let mut blob = |m: [f64; 2]| -> Vec<Vec<f64>> {
            (0..500)
                .map(|_| vec![m[0] + rng.standard_normal(), m[1] + 0.6 * rng.standard_normal()])
                .collect()
        };
        let a = blob([-1.0, 0.5]);
        let b = blob([1.2, -0.3]);
        let mut s = SldaState::new(2, 1e-4, BiasConvention::Standard)?;
        let mut init: Vec<(&[f64], usize)> = a[..20].iter().map(|x| (x.as_slice(), 0)).collect();
        init.extend(b[..20].iter().map(|x| (x.as_slice(), 1)));
        for (x, y) in &init {
            s.update_mean(x, *y)?;
        }
        s.init_covariance(&init)?;
        for k in 20..500 {
            s.update(&a[k], 0)?;
            s.update(&b[k], 1)?;
        }
        let oracle = batch_lda(&a, &b, 1e-4);
        let mut agree = 0;
        for i in 0..41 {
            for j in 0..41 {
                let x = [-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64];
                agree += usize::from(s.predict(&x)? == oracle(&x));
            }
        }
        let frac = agree as f64 / 1681.0;
        Ok((frac >= 0.99, format!("agreement {agree}/1681 ({:.2}%)", 100.0 * frac)))
    })();
    CheckOutcome::from_result("SLDA against batch LDA", r)
}

fn linear_net(input: usize, output: usize, weights: &[f64], bias: &[f64]) -> Result<DenseNet> {
    let mut net = DenseNet::zeros(&[input, output], &[Activation::Identity])?;
    let (w, b) = (net.weight_range(0), net.bias_range(0));
    net.params_mut()[w].copy_from_slice(weights);
    net.params_mut()[b].copy_from_slice(bias);
    Ok(net)
}

/// Importance-sampled likelihood of a linear-Gaussian decoder against its
/// closed-form marginal `N(x | b, AAᵀ + I)`.
pub fn importance_sampling_check() -> CheckOutcome {
    let r = (|| {
        let a = [1.2, -0.3, 0.4, 0.8];
        let b = [0.5, -0.2];
        let (mu, sigma) = ([0.3, 0.1], [0.9f64, 0.9f64]);
        let enc_bias = [mu[0], mu[1], sigma[0].ln(), sigma[1].ln()];
        let encoder = linear_net(2, 4, &[0.0; 8], &enc_bias)?;
        let vae = VaeModel::from_parts(encoder, linear_net(2, 2, &a, &b)?)?;
        let x = [1.3, 0.4];
        let c00 = a[0] * a[0] + a[1] * a[1] + 1.0;
        let c01 = a[0] * a[2] + a[1] * a[3];
        let c11 = a[2] * a[2] + a[3] * a[3] + 1.0;
        let det = c00 * c11 - c01 * c01;
        let (d0, d1) = (x[0] - b[0], x[1] - b[1]);
        let quad = (c11 * d0 * d0 - 2.0 * c01 * d0 * d1 + c00 * d1 * d1) / det;
        let truth = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        let est = importance_log_likelihood(&vae, &x, 100_000, &mut Rng::named(0, "is-eval", &[0]))?;
        let gap = (est.log_likelihood - truth).abs();
        Ok((gap < 0.05, format!("estimate {:.4}, analytic {truth:.4}, gap {gap:.4} nats", est.log_likelihood)))
    })();
    CheckOutcome::from_result("importance-sampling estimator", r)
}

/// Two interleavings of the same per-class sequences give identical models.
pub fn order_invariance_check() -> CheckOutcome {
    let r = (|| {
        let mut rng = Rng::new(12, 0);
        let per_class: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| (0..48).map(|_| (0..6).map(|_| rng.uniform()).collect()).collect())
            .collect();
        let cfg = GcConfig {
            input_dim: 6,
            hidden: vec![5, 5],
            latent_dim: 2,
            lr: 0.001,
            sub_batch: 8,
            recon_scale: ReconScale::Paper,
            prior_mode: PriorMode::Uniform,
            num_classes: 4,
            seed: 3,
        };
        let mut blocked = GenerativeClassifier::new(cfg.clone())?;
        for (y, xs) in per_class.iter().enumerate().rev() {
            for x in xs {
                blocked.observe(x, y)?;
            }
        }
        let mut mixed = GenerativeClassifier::new(cfg)?;
        let mut cursors = [0usize; 4];
        let mut order = Rng::new(99, 0);
        while cursors.iter().any(|&c| c < 48) {
            let y = order.below(4);
            if cursors[y] < 48 {
                mixed.observe(&per_class[y][cursors[y]], y)?;
                cursors[y] += 1;
            }
        }
        let mut same = true;
        for y in 0..4 {
            let (a, b) = (blocked.model(y), mixed.model(y));
            same &= match (a, b) {
                (Some(a), Some(b)) => {
                    snapshot_bytes(&a.encoder) == snapshot_bytes(&b.encoder)
                        && snapshot_bytes(&a.decoder) == snapshot_bytes(&b.decoder)
                }
                _ => false,
            };
        }
        Ok((same, format!("{} updates per ordering, snapshots identical: {same}", blocked.total_updates())))
    })();
    CheckOutcome::from_result("order invariance", r)
}

/// EWC is refused on streams and the task-free stream is the task-based
/// stream with task identities removed.
pub fn protocol_check() -> CheckOutcome {
    let r = (|| {
        let m = CompatibilityMatrix::default();
        let rejected = m.check(Method::Ewc, Protocol::TaskBasedStreaming).is_err()
            && m.check(Method::Ewc, Protocol::TaskFree).is_err();
        let data = make_block_patterns(6, 4, 20, Split::Train, &mut Rng::new(2, 2))?;
        let bench = |protocol| Benchmark {
            name: "check".into(),
            tasks: vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            iterations_per_task: 7,
            batch_size: 5,
            protocol,
            sampling: crate::stream::Sampling::WithReplacement,
        };
        let erased: Vec<StreamEvent> = make_stream(&data, &bench(Protocol::TaskBasedStreaming), 8)?
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
        let free: Vec<StreamEvent> = make_stream(&data, &bench(Protocol::TaskFree), 8)?.collect();
        let same = free == erased;
        Ok((
            rejected && same,
            format!("EWC rejected: {rejected}; task-free equals erased stream: {same} ({} events)", free.len()),
        ))
    })();
    CheckOutcome::from_result("protocol compatibility", r)
}

/// The same configuration run twice gives the same CSV, wall-clock aside.
pub fn reproducibility_check(cfg: &ExperimentConfig) -> CheckOutcome {
    let r = (|| {
        let a = mask_wallclock(&run(cfg, None)?.to_csv());
        let b = mask_wallclock(&run(cfg, None)?.to_csv());
        Ok((a == b, format!("{} rows, identical: {}", a.lines().count().saturating_sub(1), a == b)))
    })();
    CheckOutcome::from_result("reproducibility", r)
}

/// A cheap configuration on the synthetic pattern benchmark.
pub fn quick_config(method: Method) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_profile(Profile::Ci);
    c.method = method;
    c.benchmark = "split_patterns".into();
    c.seeds = vec![0, 1];
    c.iterations_per_task = 100;
    c.batch_size = 32;
    c.hidden = vec![64];
    c.gc_hidden = vec![16];
    c.latent_dim = 2;
    c.sub_batch = 16;
    c.samples = 10;
    c.dgr_hidden = vec![64];
    c.dgr_latent = 4;
    c.eval_subsample = Some(500);
    c
}

/// Every check; the reproducibility check covers each method on the
/// synthetic benchmark.
pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = vec![
        gradient_checks(),
        slda_recurrence_check(),
        slda_batch_check(),
        importance_sampling_check(),
        order_invariance_check(),
        protocol_check(),
    ];
    let mut failures = Vec::new();
    for m in Method::ALL {
        let c = reproducibility_check(&quick_config(m));
        if !c.passed {
            failures.push(format!("{}: {}", m.as_str(), c.detail));
        }
    }
    out.push(CheckOutcome::new(
        "reproducibility",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} methods give identical CSVs", Method::ALL.len())
        } else {
            failures.join("; ")
        },
    ));
    out
}
