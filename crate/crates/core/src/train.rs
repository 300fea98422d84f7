//! The training recipe: random patch sampling with dihedral augmentation,
//! L1 loss on the tape, adjustable gradient clipping, Adam, and the
//! halve-every-N-epochs learning-rate schedule.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{Exec, TapeExec};
use crate::imaging::resize::bicubic_resize;
use crate::imaging::transform::{dihedral, DIHEDRAL_COUNT};
use crate::imaging::ImagePlane;
use crate::net::weights::WeightStoreBase;
use crate::net::{forward, parameter_layout, NetworkSpec};
use crate::num::Scalar;
use crate::tensor::{Shape, TensorBase};

/// Hyperparameters of one training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Patches per optimizer step.
    pub batch: usize,
    /// Low-resolution patch side; the HR patch side is `lr_patch · scale`.
    pub lr_patch: usize,
    /// Initial learning rate (use 4e-4 when fine-tuning a checkpoint).
    pub lr0: f64,
    /// Epochs between learning-rate halvings.
    pub halve_every: usize,
    /// Optimizer steps per epoch. "Epoch" here is a declared unit of
    /// `iters_per_epoch` steps, not a corpus pass.
    pub iters_per_epoch: usize,
    /// Total epochs to run.
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clipping stiffness: gradients are clamped to ±theta/lr, so the
    /// maximum parameter step stays near theta as lr decays.
    pub clip_theta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 16,
            lr_patch: 32,
            lr0: 8e-4,
            halve_every: 20,
            iters_per_epoch: 1000,
            epochs: 60,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_theta: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.lr_patch == 0 || self.iters_per_epoch == 0 || self.epochs == 0
        {
            return Err(Error::Config(
                "batch, lr_patch, iters_per_epoch, and epochs must be positive".to_string(),
            ));
        }
        if self.halve_every == 0 {
            return Err(Error::Config("halve_every must be positive".to_string()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.lr0) || !positive(self.clip_theta) || !positive(self.eps) {
            return Err(Error::Config(
                "lr0, clip_theta, and eps must be positive and finite".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1/beta2 must lie in [0,1)".to_string()));
        }
        Ok(())
    }
}

/// Learning rate at `epoch`: lr0 halved once per `halve_every` epochs.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * 0.5f64.powi((epoch / cfg.halve_every) as i32)
}

/// Clamps every gradient element to ±theta/lr (elementwise adjustable
/// clipping: as the learning rate decays the admissible gradient grows,
/// keeping the maximum parameter step near theta).
pub fn clip_gradients<'a, T: Scalar>(
    grads: impl IntoIterator<Item = &'a mut TensorBase<T>>,
    lr: f64,
    theta: f64,
) -> Result<()> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::Config(format!("clip needs a positive lr (got {lr})")));
    }
    if !theta.is_finite() || theta <= 0.0 {
        return Err(Error::Config(format!(
            "clip needs a positive theta (got {theta})"
        )));
    }
    let bound = T::from_f64(theta / lr);
    for g in grads {
        for v in g.data_mut() {
            if *v > bound {
                *v = bound;
            } else if *v < -bound {
                *v = -bound;
            }
        }
    }
    Ok(())
}

/// Adam first/second moments per parameter, plus the shared step counter.
pub struct AdamState<T: Scalar> {
    t: u64,
    moments: IndexMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Default for AdamState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState {
            t: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update over every gradient in `grads`.
    pub fn step(
        &mut self,
        store: &mut WeightStoreBase<T>,
        grads: &IndexMap<String, TensorBase<T>>,
        lr: f64,
        cfg: &TrainConfig,
    ) -> Result<()> {
        self.t += 1;
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let one = T::one();
        let eps = T::from_f64(cfg.eps);
        // Bias corrections in f64 (beta^t underflows gracefully there).
        let c1 = T::from_f64(1.0 - cfg.beta1.powi(self.t as i32));
        let c2 = T::from_f64(1.0 - cfg.beta2.powi(self.t as i32));
        let step = T::from_f64(lr);

        for (name, g) in grads {
            let param = store.get_mut(name)?;
            if param.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "gradient shape {} does not match parameter {name:?} {}",
                        g.shape(),
                        param.shape()
                    ),
                ));
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![T::zero(); g.numel()], vec![T::zero(); g.numel()]));
            let p = param.data_mut();
            let gd = g.data();
            for i in 0..gd.len() {
                m[i] = b1 * m[i] + (one - b1) * gd[i];
                v[i] = b2 * v[i] + (one - b2) * gd[i] * gd[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - step * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn assemble_pair(
    hr: &ImagePlane,
    x0: usize,
    y0: usize,
    aug: usize,
    scale: usize,
    lr_patch: usize,
) -> Result<(ImagePlane, ImagePlane)> {
    let p = lr_patch * scale;
    let patch = hr.crop(x0, y0, p, p)?;
    let patch = dihedral(&patch, aug);
    let lr = bicubic_resize(&patch, 1, scale)?;
    Ok((lr, patch))
}

/// Draws one batch of (LR, HR) patch pairs: per sample an image, one of
/// the eight dihedral augmentations, and a random HR crop of side
/// `lr_patch·scale`, downscaled bicubically to the LR side.
pub fn sample_batch(
    corpus: &[ImagePlane],
    scale: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(TensorBase<f32>, TensorBase<f32>)> {
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".to_string()));
    }
    let p = cfg.lr_patch * scale;
    for (i, img) in corpus.iter().enumerate() {
        if img.channels() != 3 {
            return Err(Error::Image(format!(
                "corpus image {i} is not RGB ({} channels)",
                img.channels()
            )));
        }
        if img.width() < p || img.height() < p {
            return Err(Error::Image(format!(
                "corpus image {i} is {}×{}, smaller than the {p}×{p} training patch",
                img.width(),
                img.height()
            )));
        }
    }

    let lr_shape = Shape::new(cfg.batch, 3, cfg.lr_patch, cfg.lr_patch);
    let hr_shape = Shape::new(cfg.batch, 3, p, p);
    let mut lr_batch = TensorBase::<f32>::zeros(lr_shape);
    let mut hr_batch = TensorBase::<f32>::zeros(hr_shape);
    for n in 0..cfg.batch {
        // Draw against per-image bounds so every (image, crop) pair is valid.
        let img_idx = rng.gen_range(0..corpus.len());
        let img = &corpus[img_idx];
        let aug = rng.gen_range(0..DIHEDRAL_COUNT);
        let x0 = rng.gen_range(0..=img.width() - p);
        let y0 = rng.gen_range(0..=img.height() - p);
        let (lr, hr) = assemble_pair(img, x0, y0, aug, scale, cfg.lr_patch)?;
        for c in 0..3 {
            lr_batch.plane_mut(n, c).copy_from_slice(lr.plane(c));
            hr_batch.plane_mut(n, c).copy_from_slice(hr.plane(c));
        }
    }
    Ok((lr_batch, hr_batch))
}

/// One row of the loss trace (rendered as CSV `iter,epoch,lr,loss`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Renders the loss trace in its external CSV form.
pub fn render_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iter,epoch,lr,loss\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.epoch, r.lr, r.loss));
    }
    out
}

/// End-of-epoch summary handed to the checkpoint callback.
#[derive(Clone, Copy, Debug)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    /// True when this epoch's mean loss is the best seen so far.
    pub is_best: bool,
}

/// Result of a training run.
pub struct TrainOutcome {
    pub store: WeightStoreBase<f32>,
    pub trace: Vec<TraceRow>,
}

/// Runs the full recipe from `initial` weights: per iteration
/// sample → forward → L1 → backward → clip → Adam. `on_epoch` is invoked
/// after each epoch (checkpoint cadence). Fully deterministic per
/// (seed, corpus, config).
pub fn train_loop(
    spec: &NetworkSpec,
    corpus: &[ImagePlane],
    cfg: &TrainConfig,
    initial: WeightStoreBase<f32>,
    mut on_epoch: impl FnMut(&EpochReport, &WeightStoreBase<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    // Surface store/layout mismatches before the first expensive step.
    let layout = parameter_layout(spec)?;
    let expected: usize = layout.iter().map(|l| l.params.len()).sum();
    if initial.len() != expected {
        return Err(Error::Container(format!(
            "initial weights hold {} parameters, spec expects {expected}",
            initial.len()
        )));
    }

    let mut store = initial;
    let mut adam = AdamState::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.epochs * cfg.iters_per_epoch);
    let mut best = f64::INFINITY;
    let mut iter = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        let mut epoch_sum = 0.0f64;
        for _ in 0..cfg.iters_per_epoch {
            let (lr_batch, hr_batch) = sample_batch(corpus, spec.scale, cfg, &mut rng)?;
            let mut exec = TapeExec::new(&store);
            let x = exec.input(lr_batch)?;
            let out = forward(spec, &mut exec, &x)?;
            let loss_id = exec.l1_loss(out.sr, hr_batch)?;
            let loss = exec.scalar_value(loss_id).to_f64();
            if !loss.is_finite() {
                return Err(Error::Config(format!(
                    "loss became non-finite ({loss}) at iteration {iter} (epoch {epoch}); \
                     lower the learning rate or tighten clip_theta"
                )));
            }
            exec.backward(loss_id)?;
            let mut grads = exec.gradients()?;
            clip_gradients(grads.values_mut(), lr, cfg.clip_theta)?;
            adam.step(&mut store, &grads, lr, cfg)?;
            trace.push(TraceRow {
                iter,
                epoch,
                lr,
                loss,
            });
            epoch_sum += loss;
            iter += 1;
        }
        let mean_loss = epoch_sum / cfg.iters_per_epoch as f64;
        let is_best = mean_loss < best;
        if is_best {
            best = mean_loss;
        }
        on_epoch(
            &EpochReport {
                epoch,
                mean_loss,
                is_best,
            },
            &store,
        )?;
    }
    Ok(TrainOutcome { store, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::OracleRng;
    use crate::imaging::ColorSpace;
    use crate::net::init_weights;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn schedule_halves_every_twenty_epochs() {
        let c = cfg();
        assert_eq!(lr_schedule(0, &c), 8e-4);
        assert_eq!(lr_schedule(19, &c), 8e-4);
        assert_eq!(lr_schedule(20, &c), 4e-4);
        assert_eq!(lr_schedule(59, &c), 2e-4);
        // Non-increasing, piecewise constant with period 20.
        let mut prev = f64::INFINITY;
        for e in 0..100 {
            let lr = lr_schedule(e, &c);
            assert!(lr <= prev);
            assert_eq!(lr, lr_schedule(e - e % 20, &c));
            prev = lr;
        }
    }

    #[test]
    fn clip_bound_example() {
        let mut g =
            TensorBase::from_vec(Shape::new(1, 1, 1, 3), vec![600.0f32, -700.0, 12.5]).unwrap();
        clip_gradients(std::iter::once(&mut g), 8e-4, 0.4).unwrap();
        assert_eq!(g.data(), &[500.0, -500.0, 12.5]);
    }

    #[test]
    fn clip_bound_scales_with_lr() {
        let mk = || TensorBase::from_vec(Shape::new(1, 1, 1, 1), vec![1e9f32]).unwrap();
        let mut a = mk();
        let mut b = mk();
        clip_gradients(std::iter::once(&mut a), 8e-4, 0.4).unwrap();
        clip_gradients(std::iter::once(&mut b), 4e-4, 0.4).unwrap();
        assert_eq!(b.data()[0], 2.0 * a.data()[0]);
        assert!(clip_gradients(std::iter::once(&mut a), 0.0, 0.4).is_err());
        assert!(clip_gradients(std::iter::once(&mut a), 1e-3, 0.0).is_err());
    }

    #[test]
    fn clip_never_exceeds_bound_on_random_data() {
        let mut rng = OracleRng::new(3);
        let mut g = rng.tensor::<f32>(Shape::new(2, 3, 4, 5), -2000.0, 2000.0);
        let (lr, theta) = (8e-4, 0.4);
        clip_gradients(std::iter::once(&mut g), lr, theta).unwrap();
        let bound = (theta / lr) as f32;
        assert!(g.data().iter().all(|v| v.abs() <= bound));
    }

    fn store_with(name: &str, values: Vec<f32>) -> WeightStoreBase<f32> {
        let mut s = WeightStoreBase::new();
        let shape = Shape::new(1, 1, 1, values.len());
        s.insert(name, TensorBase::from_vec(shape, values).unwrap())
            .unwrap();
        s
    }

    fn grads_with(name: &str, values: Vec<f32>) -> IndexMap<String, TensorBase<f32>> {
        let shape = Shape::new(1, 1, 1, values.len());
        let mut m = IndexMap::new();
        m.insert(
            name.to_string(),
            TensorBase::from_vec(shape, values).unwrap(),
        );
        m
    }

    #[test]
    fn adam_first_step_is_minus_lr() {
        let mut store = store_with("w", vec![0.0, 0.0]);
        let grads = grads_with("w", vec![1.0, 1.0]);
        let mut adam = AdamState::new();
        let lr = 8e-4;
        adam.step(&mut store, &grads, lr, &cfg()).unwrap();
        for &p in store.get("w").unwrap().data() {
            // f32 rounding of the beta terms perturbs the step by ~1e-5·lr.
            assert!((p as f64 + lr).abs() < 1e-4 * lr, "{p}");
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut store = store_with("w", vec![0.7, -0.3]);
        let grads = grads_with("w", vec![0.0, 0.0]);
        let mut adam = AdamState::new();
        for _ in 0..10 {
            adam.step(&mut store, &grads, 1e-3, &cfg()).unwrap();
        }
        assert_eq!(store.get("w").unwrap().data(), &[0.7, -0.3]);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut store = store_with("w", vec![0.5, -0.25, 0.125]);
            let mut adam = AdamState::new();
            for t in 0..10 {
                let g = grads_with("w", vec![0.1 * t as f32, -0.2, 0.3]);
                adam.step(&mut store, &g, 1e-3, &cfg()).unwrap();
            }
            store.get("w").unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_updates_are_odd_in_the_gradient() {
        let mut plus = store_with("w", vec![0.0, 0.0]);
        let mut minus = store_with("w", vec![0.0, 0.0]);
        let g = grads_with("w", vec![0.37, -1.2]);
        let g_neg = grads_with("w", vec![-0.37, 1.2]);
        let mut a1 = AdamState::new();
        let mut a2 = AdamState::new();
        for _ in 0..5 {
            a1.step(&mut plus, &g, 1e-3, &cfg()).unwrap();
            a2.step(&mut minus, &g_neg, 1e-3, &cfg()).unwrap();
        }
        for (p, m) in plus
            .get("w")
            .unwrap()
            .data()
            .iter()
            .zip(minus.get("w").unwrap().data())
        {
            assert_eq!(*p, -*m);
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut store = store_with("w", vec![0.0, 0.0]);
        let grads = grads_with("w", vec![1.0]);
        let mut adam = AdamState::new();
        assert!(adam.step(&mut store, &grads, 1e-3, &cfg()).is_err());
    }

    fn gradient_image(seed: u64, w: usize, h: usize) -> ImagePlane {
        let mut rng = OracleRng::new(seed);
        let mut img = ImagePlane::zeros(w, h, 3, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let base = (x as f32 / w as f32 + y as f32 / h as f32) / 2.0;
                    let noise: f32 = rng.uniform(-0.05, 0.05);
                    *img.at_mut(c, y, x) = (base + noise).clamp(0.0, 1.0);
                }
            }
        }
        img
    }

    #[test]
    fn sample_batch_shapes_and_determinism() {
        let corpus = vec![gradient_image(1, 80, 70), gradient_image(2, 72, 96)];
        let mut c = cfg();
        c.batch = 4;
        c.lr_patch = 16;
        let mut rng1 = ChaCha8Rng::seed_from_u64(9);
        let (lr, hr) = sample_batch(&corpus, 2, &c, &mut rng1).unwrap();
        assert_eq!(lr.shape(), Shape::new(4, 3, 16, 16));
        assert_eq!(hr.shape(), Shape::new(4, 3, 32, 32));
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let (lr2, hr2) = sample_batch(&corpus, 2, &c, &mut rng2).unwrap();
        assert_eq!(lr.data(), lr2.data());
        assert_eq!(hr.data(), hr2.data());
    }

    #[test]
    fn sample_batch_rejects_small_images() {
        let corpus = vec![gradient_image(1, 40, 40)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // 32·2 = 64 > 40.
        assert!(sample_batch(&corpus, 2, &cfg(), &mut rng).is_err());
        assert!(sample_batch(&[], 2, &cfg(), &mut rng).is_err());
    }

    #[test]
    fn identity_augmentation_is_direct_degradation() {
        let img = gradient_image(5, 80, 80);
        let (lr, hr) = assemble_pair(&img, 8, 12, 0, 2, 16).unwrap();
        let crop = img.crop(8, 12, 32, 32).unwrap();
        assert_eq!(hr, crop);
        assert_eq!(lr, bicubic_resize(&crop, 1, 2).unwrap());
    }

    /// Mirrors the per-sample draw order inside [`sample_batch`].
    fn draw_sample(
        rng: &mut ChaCha8Rng,
        images: usize,
        max_x0: usize,
        max_y0: usize,
    ) -> (usize, usize, usize, usize) {
        let img = rng.gen_range(0..images);
        let aug = rng.gen_range(0..DIHEDRAL_COUNT);
        let x0 = rng.gen_range(0..=max_x0);
        let y0 = rng.gen_range(0..=max_y0);
        (img, aug, x0, y0)
    }

    #[test]
    fn augmentation_draws_are_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut counts = [0usize; DIHEDRAL_COUNT];
        let draws = 10_000;
        for _ in 0..draws {
            let (_, aug, _, _) = draw_sample(&mut rng, 5, 40, 40);
            counts[aug] += 1;
        }
        for (aug, &n) in counts.iter().enumerate() {
            let freq = n as f64 / draws as f64;
            assert!((freq - 0.125).abs() <= 0.02, "aug {aug}: {freq}");
        }
    }

    #[test]
    fn tiny_train_loop_runs_and_is_deterministic() {
        let spec = NetworkSpec::new(1, 1, 2);
        let corpus = vec![gradient_image(7, 70, 70)];
        let mut c = cfg();
        c.batch = 2;
        c.lr_patch = 8;
        c.iters_per_epoch = 3;
        c.epochs = 2;
        c.seed = 4;
        let run = || {
            let initial = init_weights::<f32>(&spec, 11).unwrap();
            let mut reports = Vec::new();
            let out = train_loop(&spec, &corpus, &c, initial, |r, _| {
                reports.push((r.epoch, r.mean_loss, r.is_best));
                Ok(())
            })
            .unwrap();
            (out.trace, reports, out.store.to_bytes().unwrap())
        };
        let (trace1, reports1, bytes1) = run();
        let (trace2, reports2, bytes2) = run();
        assert_eq!(trace1.len(), 6);
        assert_eq!(trace1, trace2);
        assert_eq!(reports1, reports2);
        assert_eq!(bytes1, bytes2);
        assert_eq!(reports1.len(), 2);
        assert!(reports1[0].2, "first epoch is always the best so far");
        // Loss trace renders with the declared header.
        let csv = render_trace_csv(&trace1);
        assert!(csv.starts_with("iter,epoch,lr,loss\n"));
        assert_eq!(csv.lines().count(), 7);
        let first = csv.lines().nth(1).unwrap();
        assert!(first.starts_with("0,0,0.0008,"));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let mut bad = cfg();
        bad.batch = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.lr0 = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.beta1 = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.halve_every = 0;
        assert!(bad.validate().is_err());
    }
}
