//! Named end-to-end health checks: oracle equivalence for the heavy
//! kernels, finite-difference validation of every differentiable path,
//! convexity of the fusion weights, and the analytic metric values.
//!
//! All gradient checks run in f64 so the finite-difference step (1e-5)
//! sits far above rounding noise; tolerances are on the scale-free error
//! `|analytic − fd| / max(1, |analytic|, |fd|)`.

use indexmap::IndexMap;

use crate::check::{conv2d_loop, depthwise_loop, finite_diff, sffm_loop, OracleRng};
use crate::error::{Error, Result};
use crate::exec::{EagerExec, Exec, TapeExec};
use crate::imaging::metrics::{psnr_y, ssim_y};
use crate::imaging::{ColorSpace, ImagePlane};
use crate::net::weights::WeightStoreBase;
use crate::net::{forward, init_weights, NetworkBase, NetworkSpec, Variant};
use crate::ops;
use crate::tensor::{ConvSpec, Shape, TensorBase};

/// Finite-difference step for f64 checks.
const FD_STEP: f64 = 1e-5;
/// Tolerance for single-op and composite gradient checks (f64).
const GRAD_TOL: f64 = 1e-4;
/// Tolerance for oracle equivalence in f64 (pure reassociation error).
const ORACLE_TOL: f64 = 1e-10;
/// Elements probed per parameter tensor in composite checks.
const PROBES_PER_TENSOR: usize = 4;

/// Outcome of one named check.
#[derive(Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub result: Result<()>,
}

/// Runs the full suite and returns one outcome per named check.
pub fn run_all() -> Vec<CheckOutcome> {
    type Check = (&'static str, fn() -> Result<()>);
    let checks: Vec<Check> = vec![
        ("conv oracle (standard)", conv_oracle_standard),
        ("conv oracle (grouped)", conv_oracle_grouped),
        ("conv oracle (depthwise)", conv_oracle_depthwise),
        ("fusion forward oracle", fusion_forward_oracle),
        ("pixel shuffle round-trip", pixel_shuffle_roundtrip),
        ("gradients: grouped conv", grad_grouped_conv),
        ("gradients: spindle network", grad_spindle_network),
        ("gradients: depthwise network", grad_depthwise_network),
        ("gradients: residual network", grad_residual_network),
        ("gradients: fusion parameters", grad_fusion_parameters),
        ("fusion weights are convex", fusion_convexity),
        ("psnr analytic offset", psnr_analytic),
        ("ssim self-identity", ssim_identity),
        ("luma closed forms", luma_closed_forms),
        ("weight container round-trip", container_roundtrip),
    ];
    checks
        .into_iter()
        .map(|(name, f)| CheckOutcome { name, result: f() })
        .collect()
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.result.is_ok())
}

/// One `PASS`/`FAIL` line per check.
pub fn render_report(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        match &o.result {
            Ok(()) => out.push_str(&format!("PASS {}\n", o.name)),
            Err(e) => out.push_str(&format!("FAIL {}: {e}\n", o.name)),
        }
    }
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    out.push_str(&format!(
        "{} checks, {} failed\n",
        outcomes.len(),
        failed
    ));
    out
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn max_abs_diff(a: &TensorBase<f64>, b: &TensorBase<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- oracles

fn conv_oracle_case(spec: ConvSpec, seed: u64) -> Result<()> {
    let mut rng = OracleRng::new(seed);
    let x = rng.tensor::<f64>(Shape::new(2, spec.in_channels, 7, 6), -1.0, 1.0);
    let w = rng.tensor::<f64>(spec.weight_shape(), -0.5, 0.5);
    let b = rng.tensor::<f64>(Shape::new(1, spec.out_channels, 1, 1), -0.2, 0.2);
    let fast = ops::conv2d(&x, &w, Some(b.data()), &spec)?;
    let slow = conv2d_loop(&x, &w, Some(b.data()), &spec)?;
    let diff = max_abs_diff(&fast, &slow);
    ensure(diff <= ORACLE_TOL, || {
        format!("conv deviates from loop oracle by {diff}")
    })
}

fn conv_oracle_standard() -> Result<()> {
    conv_oracle_case(ConvSpec::new(5, 4, 3, 1), 11)
}

fn conv_oracle_grouped() -> Result<()> {
    conv_oracle_case(ConvSpec::new(8, 12, 3, 1).with_groups(4), 12)
}

fn conv_oracle_depthwise() -> Result<()> {
    let spec = ConvSpec::depthwise(6, 3, 1);
    let mut rng = OracleRng::new(13);
    let x = rng.tensor::<f64>(Shape::new(1, 6, 8, 5), -1.0, 1.0);
    let w = rng.tensor::<f64>(spec.weight_shape(), -0.5, 0.5);
    let b = rng.tensor::<f64>(Shape::new(1, 6, 1, 1), -0.2, 0.2);
    let fast = ops::conv2d(&x, &w, Some(b.data()), &spec)?;
    let slow = depthwise_loop(&x, &w, Some(b.data()), &spec)?;
    let diff = max_abs_diff(&fast, &slow);
    ensure(diff <= ORACLE_TOL, || {
        format!("depthwise conv deviates from loop oracle by {diff}")
    })
}

fn fusion_forward_oracle() -> Result<()> {
    // The fused output of a small network must match the scalar-loop
    // oracle applied to the same level tensors and dense weights.
    let spec = NetworkSpec::new(1, 3, 2);
    let store = init_weights::<f64>(&spec, 21)?;
    let mut rng = OracleRng::new(22);
    let levels: Vec<TensorBase<f64>> = (0..3)
        .map(|_| rng.tensor::<f64>(Shape::new(2, 48, 4, 4), -1.0, 1.0))
        .collect();
    let alphas: Vec<TensorBase<f64>> = (0..3)
        .map(|i| Ok(store.get(&format!("sffm.level.{i}.weight"))?.clone()))
        .collect::<Result<_>>()?;
    let oracle = sffm_loop(&levels, &alphas)?;

    let mut exec = EagerExec::new(&store);
    let refs: Vec<_> = levels
        .iter()
        .map(|l| exec.input(l.clone()))
        .collect::<Result<_>>()?;
    let mut scores = Vec::new();
    for (i, r) in refs.iter().enumerate() {
        let pooled = exec.global_avg_pool(r)?;
        scores.push(exec.dense(&pooled, &format!("sffm.level.{i}"))?);
    }
    let stacked = exec.concat(&scores)?;
    let weights = exec.softmax_levels(&stacked, 3)?;
    let mut acc = None;
    for (i, r) in refs.iter().enumerate() {
        let w_i = exec.slice(&weights, i * 48, 48)?;
        let scaled = exec.scale_channels(r, &w_i)?;
        acc = Some(match acc {
            None => scaled,
            Some(prev) => exec.add(&prev, &scaled)?,
        });
    }
    let fused = acc.unwrap();
    let diff = max_abs_diff(exec.value(&fused), &oracle);
    ensure(diff <= 1e-9, || {
        format!("fusion deviates from scalar oracle by {diff}")
    })
}

fn pixel_shuffle_roundtrip() -> Result<()> {
    let mut rng = OracleRng::new(31);
    for r in [2usize, 3] {
        let x = rng.tensor::<f64>(Shape::new(2, 5 * r * r, 4, 3), -1.0, 1.0);
        let shuffled = ops::pixel_shuffle(&x, r)?;
        let back = ops::pixel_unshuffle(&shuffled, r)?;
        ensure(back == x, || {
            format!("pixel shuffle round-trip altered data at r={r}")
        })?;
    }
    Ok(())
}

// -------------------------------------------------------------- gradients

fn network_loss(
    spec: &NetworkSpec,
    store: &WeightStoreBase<f64>,
    input: &TensorBase<f64>,
    target: &TensorBase<f64>,
) -> Result<f64> {
    let mut exec = EagerExec::new(store);
    let x = exec.input(input.clone())?;
    let out = forward(spec, &mut exec, &x)?;
    let loss = ops::l1_loss(exec.value(&out.sr), target)?;
    Ok(loss.data()[0])
}

fn analytic_grads(
    spec: &NetworkSpec,
    store: &WeightStoreBase<f64>,
    input: &TensorBase<f64>,
    target: &TensorBase<f64>,
) -> Result<IndexMap<String, TensorBase<f64>>> {
    let mut exec = TapeExec::new(store);
    let x = exec.input(input.clone())?;
    let out = forward(spec, &mut exec, &x)?;
    let loss = exec.l1_loss(out.sr, target.clone())?;
    exec.backward(loss)?;
    exec.gradients()
}

/// Finite-difference check of every parameter tensor of `spec` (a few
/// probed elements each) against the tape's analytic gradients.
fn composite_fd_check(spec: &NetworkSpec, seed: u64) -> Result<()> {
    let store = init_weights::<f64>(spec, seed)?;
    let mut rng = OracleRng::new(seed ^ 0x5eed);
    let input = rng.tensor::<f64>(Shape::new(1, 3, 8, 8), 0.05, 0.95);
    let hr = 8 * spec.scale;
    let target = rng.tensor::<f64>(Shape::new(1, 3, hr, hr), 0.05, 0.95);
    let grads = analytic_grads(spec, &store, &input, &target)?;
    for (name, g) in &grads {
        let mut param = store.get(name)?.data().to_vec();
        let probes = PROBES_PER_TENSOR.min(param.len());
        let indices = rng.indices(param.len(), probes);
        let check = finite_diff(&mut param, g.data(), &indices, FD_STEP, |p| {
            let mut s = store.clone();
            s.get_mut(name)?.data_mut().copy_from_slice(p);
            network_loss(spec, &s, &input, &target)
        })?;
        if !check.ok(GRAD_TOL) {
            return Err(Error::Config(format!(
                "gradient of {name} off by {:.3e} (worst {:?})",
                check.max_err, check.worst
            )));
        }
    }
    Ok(())
}

fn grad_spindle_network() -> Result<()> {
    // Exercises conv (1×1 and 3×3), PReLU, slice/concat, pooling, dense,
    // softmax, channel scaling, skip adds, pixel shuffle, and L1.
    composite_fd_check(&NetworkSpec::new(1, 2, 2), 41)
}

fn grad_depthwise_network() -> Result<()> {
    composite_fd_check(&NetworkSpec::new(1, 2, 2).with_depthwise(true), 43)
}

fn grad_residual_network() -> Result<()> {
    composite_fd_check(
        &NetworkSpec::new(1, 2, 2).with_variant(Variant::ResidualBaseline),
        47,
    )
}

fn grad_fusion_parameters() -> Result<()> {
    // Deeper fusion stack (three levels): checks only the fusion dense
    // weights, whose gradient flows through softmax and channel scaling.
    let spec = NetworkSpec::new(1, 3, 2);
    let store = init_weights::<f64>(&spec, 53)?;
    let mut rng = OracleRng::new(54);
    let input = rng.tensor::<f64>(Shape::new(1, 3, 8, 8), 0.05, 0.95);
    let target = rng.tensor::<f64>(Shape::new(1, 3, 16, 16), 0.05, 0.95);
    let grads = analytic_grads(&spec, &store, &input, &target)?;
    for i in 0..3 {
        let name = format!("sffm.level.{i}.weight");
        let g = grads
            .get(&name)
            .ok_or_else(|| Error::Config(format!("no gradient for {name}")))?;
        let mut param = store.get(&name)?.data().to_vec();
        let indices = rng.indices(param.len(), 8);
        let check = finite_diff(&mut param, g.data(), &indices, FD_STEP, |p| {
            let mut s = store.clone();
            s.get_mut(&name)?.data_mut().copy_from_slice(p);
            network_loss(&spec, &s, &input, &target)
        })?;
        if !check.ok(GRAD_TOL) {
            return Err(Error::Config(format!(
                "gradient of {name} off by {:.3e}",
                check.max_err
            )));
        }
    }
    Ok(())
}

fn grad_grouped_conv() -> Result<()> {
    // Grouped convolution does not occur inside the built-in presets, so
    // check its backward pass directly on the tape.
    let spec = ConvSpec::new(8, 8, 3, 1).with_groups(4);
    let mut rng = OracleRng::new(61);
    let mut store = WeightStoreBase::<f64>::new();
    store.insert("g.weight", rng.tensor(spec.weight_shape(), -0.5, 0.5))?;
    store.insert("g.bias", rng.tensor(Shape::new(1, 8, 1, 1), -0.2, 0.2))?;
    let input = rng.tensor::<f64>(Shape::new(1, 8, 6, 6), -1.0, 1.0);
    let target = rng.tensor::<f64>(Shape::new(1, 8, 6, 6), -1.0, 1.0);

    let loss_of = |s: &WeightStoreBase<f64>| -> Result<f64> {
        let w = s.get("g.weight")?;
        let b = s.get("g.bias")?;
        let y = ops::conv2d(&input, w, Some(b.data()), &spec)?;
        Ok(ops::l1_loss(&y, &target)?.data()[0])
    };

    let mut exec = TapeExec::new(&store);
    let x = exec.input(input.clone())?;
    let y = exec.conv(&x, "g", &spec)?;
    let loss = exec.l1_loss(y, target.clone())?;
    exec.backward(loss)?;
    let grads = exec.gradients()?;

    for name in ["g.weight", "g.bias"] {
        let g = &grads[name];
        let mut param = store.get(name)?.data().to_vec();
        let indices = rng.indices(param.len(), 8.min(param.len()));
        let check = finite_diff(&mut param, g.data(), &indices, FD_STEP, |p| {
            let mut s = store.clone();
            s.get_mut(name)?.data_mut().copy_from_slice(p);
            loss_of(&s)
        })?;
        if !check.ok(GRAD_TOL) {
            return Err(Error::Config(format!(
                "grouped conv gradient of {name} off by {:.3e}",
                check.max_err
            )));
        }
    }
    Ok(())
}

// ----------------------------------------------------- convexity, metrics

fn fusion_convexity() -> Result<()> {
    let spec = NetworkSpec::new(1, 3, 2);
    let net = NetworkBase::<f32>::new(spec, 71)?;
    let mut rng = OracleRng::new(72);
    for trial in 0..100 {
        let input = rng.tensor::<f32>(Shape::new(1, 3, 8, 8), 0.0, 1.0);
        let weights = net.fusion_weights(&input)?;
        let data = weights.data();
        for j in 0..48 {
            let mut sum = 0.0f64;
            for i in 0..3 {
                let w = data[i * 48 + j] as f64;
                ensure(w > 0.0, || {
                    format!("trial {trial}: weight level {i} channel {j} = {w} not positive")
                })?;
                sum += w;
            }
            ensure((sum - 1.0).abs() <= 1e-6, || {
                format!("trial {trial}: channel {j} weights sum to {sum}")
            })?;
        }
    }
    Ok(())
}

fn psnr_analytic() -> Result<()> {
    // A uniform 10/255 luma offset gives 20·log10(25.5) ≈ 28.1308 dB.
    let mut a = ImagePlane::zeros(40, 30, 1, ColorSpace::LumaY);
    let mut b = ImagePlane::zeros(40, 30, 1, ColorSpace::LumaY);
    for (i, v) in a.data_mut().iter_mut().enumerate() {
        *v = 0.3 + 0.2 * ((i % 7) as f32 / 7.0);
    }
    for (i, v) in b.data_mut().iter_mut().enumerate() {
        *v = 0.3 + 0.2 * ((i % 7) as f32 / 7.0) + 10.0 / 255.0;
    }
    let db = psnr_y(&a, &b, 2)?;
    let expected = 20.0 * 25.5f64.log10();
    ensure((db - expected).abs() <= 0.01, || {
        format!("psnr {db} differs from analytic {expected}")
    })
}

fn ssim_identity() -> Result<()> {
    let mut rng = OracleRng::new(81);
    let mut img = ImagePlane::zeros(24, 20, 1, ColorSpace::LumaY);
    for v in img.data_mut() {
        *v = rng.uniform::<f32>(0.0, 1.0);
    }
    let s = ssim_y(&img, &img, 2)?;
    ensure(s == 1.0, || format!("ssim of an image with itself is {s}"))
}

fn luma_closed_forms() -> Result<()> {
    let cases = [
        ([1.0f32, 1.0, 1.0], 235.0 / 255.0),
        ([0.0, 0.0, 0.0], 16.0 / 255.0),
        ([0.5, 0.5, 0.5], 125.5 / 255.0),
    ];
    for (rgb, want) in cases {
        let mut img = ImagePlane::zeros(1, 1, 3, ColorSpace::Rgb);
        for (c, &v) in rgb.iter().enumerate() {
            *img.at_mut(c, 0, 0) = v;
        }
        let y = img.luma()?;
        let got = y.at(0, 0, 0);
        ensure((got - want).abs() <= 1e-6, || {
            format!("luma of {rgb:?} = {got}, want {want}")
        })?;
    }
    Ok(())
}

fn container_roundtrip() -> Result<()> {
    let spec = NetworkSpec::new(1, 2, 3);
    let store = init_weights::<f32>(&spec, 91)?;
    let bytes = store.to_bytes()?;
    let back = WeightStoreBase::<f32>::from_bytes(&bytes)?;
    ensure(back == store, || {
        "weight container round-trip altered contents".to_string()
    })?;
    ensure(back.to_bytes()? == bytes, || {
        "re-serialization is not byte-identical".to_string()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        let outcomes = run_all();
        let report = render_report(&outcomes);
        assert!(all_passed(&outcomes), "{report}");
        assert_eq!(outcomes.len(), 15);
        assert!(report.contains("PASS conv oracle (standard)"));
        assert!(report.ends_with("15 checks, 0 failed\n"));
    }

    #[test]
    fn report_marks_failures() {
        let outcomes = vec![
            CheckOutcome {
                name: "ok check",
                result: Ok(()),
            },
            CheckOutcome {
                name: "bad check",
                result: Err(Error::Config("broken".to_string())),
            },
        ];
        assert!(!all_passed(&outcomes));
        let report = render_report(&outcomes);
        assert!(report.contains("PASS ok check"));
        assert!(report.contains("FAIL bad check: "));
        assert!(report.contains("2 checks, 1 failed"));
    }
}
