//! Implementations of the six subcommands.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::{json, Value};

use lffn_core::analysis::{block_weight_ratios, default_cost_report, dump_fusion_weights};
use lffn_core::imaging::png::{load_png, save_png};
use lffn_core::imaging::resize::{bicubic_resize, degrade};
use lffn_core::imaging::{ColorSpace, ImagePlane};
use lffn_core::imaging::metrics::{psnr_y, ssim_y};
use lffn_core::net::{infer_spec, init_weights};
use lffn_core::selftest;
use lffn_core::train::{render_trace_csv, train_loop};
use lffn_core::{Network, WeightStore};

use crate::settings::{
    load_json_config, require_dir, require_file, require_writable, resolve_spec,
    resolve_train_config, spec_requested, thread_cap, CliError, CliResult,
};
use crate::{AnalyzeArgs, DumpSffmArgs, EvalArgs, SrArgs, TrainArgs};

fn pick(flag: &Option<PathBuf>, json: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| json.clone())
}

fn required(value: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    value.ok_or_else(|| CliError::usage(format!("missing required {flag}")))
}

/// Sorted list of the PNG files directly inside `dir`.
fn png_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!(
            "no PNG images found in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn write_or_print(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => {
            require_writable(path, "output")?;
            std::fs::write(path, text)
                .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ------------------------------------------------------------------ train

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let jsoncfg = load_json_config(args.config.as_deref())?;
    let corpus_dir = required(pick(&args.corpus, &jsoncfg.corpus), "--corpus")?;
    require_dir(&corpus_dir, "corpus")?;
    let out = required(pick(&args.out, &jsoncfg.out), "--out")?;
    require_writable(&out, "weights output")?;
    let loss_csv = pick(&args.loss_csv, &jsoncfg.loss_csv)
        .unwrap_or_else(|| out.with_extension("loss.csv"));
    require_writable(&loss_csv, "loss CSV output")?;
    let resume = pick(&args.resume, &jsoncfg.resume);
    let seed = args.seed.or(jsoncfg.seed).unwrap_or(0);
    let cfg = resolve_train_config(&args.train, &jsoncfg, seed, resume.is_some())?;

    let (spec, initial) = match &resume {
        Some(path) => {
            require_file(path, "resume weights")?;
            let store = WeightStore::load(path)?;
            let inferred = infer_spec(&store)?;
            if spec_requested(&args.spec, &jsoncfg) {
                let requested = resolve_spec(&args.spec, &jsoncfg)?;
                if requested != inferred {
                    return Err(CliError::usage(format!(
                        "requested spec (B{} M{} x{} depthwise={} {}) conflicts with resumed \
                         weights (B{} M{} x{} depthwise={} {})",
                        requested.blocks,
                        requested.modules,
                        requested.scale,
                        requested.depthwise,
                        requested.variant.as_str(),
                        inferred.blocks,
                        inferred.modules,
                        inferred.scale,
                        inferred.depthwise,
                        inferred.variant.as_str(),
                    )));
                }
            }
            (inferred, store)
        }
        None => {
            let spec = resolve_spec(&args.spec, &jsoncfg)?;
            let store = init_weights(&spec, seed)?;
            (spec, store)
        }
    };

    let files = png_files(&corpus_dir)?;
    let mut corpus = Vec::with_capacity(files.len());
    for f in &files {
        corpus.push(load_png(f)?);
    }

    let out_path = out.clone();
    let outcome = train_loop(&spec, &corpus, &cfg, initial, |report, store| {
        // Checkpoint cadence: persist after every epoch.
        store.save(&out_path)?;
        eprintln!(
            "epoch {:>3}: mean L1 {:.6}{}",
            report.epoch,
            report.mean_loss,
            if report.is_best { " (best)" } else { "" }
        );
        Ok(())
    })?;

    outcome.store.save(&out)?;
    std::fs::write(&loss_csv, render_trace_csv(&outcome.trace))
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", loss_csv.display())))?;
    let last = outcome.trace.last().expect("non-empty trace");
    println!(
        "trained {} iterations ({} epochs) on {} images; final loss {:.6}",
        outcome.trace.len(),
        cfg.epochs,
        corpus.len(),
        last.loss
    );
    println!("weights: {}", out.display());
    println!("loss trace: {}", loss_csv.display());
    Ok(())
}

// ------------------------------------------------------------------- eval

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalBackend {
    /// Super-resolve the degraded input with the loaded network.
    Network,
    /// Test hook: echo the ground truth (PSNR must hit its ∞ sentinel).
    Identity,
}

impl EvalBackend {
    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "network" => Ok(EvalBackend::Network),
            "identity" => Ok(EvalBackend::Identity),
            other => Err(CliError::usage(format!(
                "unknown backend {other:?} (expected network or identity)"
            ))),
        }
    }
}

struct EvalRow {
    image: String,
    psnr_db: f64,
    ssim: f64,
    bicubic_psnr_db: f64,
    bicubic_ssim: f64,
}

/// PSNR can be the +∞ sentinel, which JSON numbers cannot hold; render it
/// as the string "inf".
fn db_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn eval_one(
    path: &Path,
    net: &Network,
    scale: usize,
    backend: EvalBackend,
) -> lffn_core::Result<EvalRow> {
    let hr_raw = load_png(path)?;
    let (hr, lr) = degrade(&hr_raw, scale)?;
    // Quantize the degraded input: scoring matches a pipeline that stores
    // intermediate images as 8-bit PNGs.
    let lr = lr.quantize8();
    let sr = match backend {
        EvalBackend::Network => {
            let out = net.super_resolve(&lr.to_tensor())?;
            ImagePlane::from_tensor(&out, ColorSpace::Rgb)?.quantize8()
        }
        EvalBackend::Identity => hr.clone(),
    };
    let bicubic = bicubic_resize(&lr, scale, 1)?.quantize8();
    let hr_y = hr.luma()?;
    let sr_y = sr.luma()?;
    let bic_y = bicubic.luma()?;
    Ok(EvalRow {
        image: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        psnr_db: psnr_y(&sr_y, &hr_y, scale)?,
        ssim: ssim_y(&sr_y, &hr_y, scale)?,
        bicubic_psnr_db: psnr_y(&bic_y, &hr_y, scale)?,
        bicubic_ssim: ssim_y(&bic_y, &hr_y, scale)?,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let jsoncfg = load_json_config(args.config.as_deref())?;
    let weights = required(pick(&args.weights, &jsoncfg.weights), "--weights")?;
    require_file(&weights, "weights")?;
    let corpus_dir = required(pick(&args.corpus, &jsoncfg.corpus), "--corpus")?;
    require_dir(&corpus_dir, "corpus")?;
    let out = pick(&args.out, &jsoncfg.out);
    let backend = EvalBackend::parse(&args.backend)?;

    let net = Network::from_store(WeightStore::load(&weights)?)?;
    let scale = net.spec().scale;
    let files = png_files(&corpus_dir)?;

    let workers = thread_cap()?.min(files.len());
    // Work queue + slot-per-image results; output order is the sorted
    // filename order regardless of which worker finishes when.
    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..files.len()).collect());
    let results: Mutex<Vec<Option<Result<EvalRow, String>>>> =
        Mutex::new((0..files.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue poisoned").pop_front();
                let Some(i) = next else { break };
                let row = eval_one(&files[i], &net, scale, backend).map_err(|e| e.to_string());
                results.lock().expect("results poisoned")[i] = Some(row);
            });
        }
    });
    let results = results.into_inner().expect("results poisoned");

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (file, slot) in files.iter().zip(results) {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        match slot.expect("every queued image was processed") {
            Ok(row) => rows.push(row),
            Err(message) => {
                eprintln!("skipping {name}: {message}");
                failures.push(json!({ "image": name, "error": message }));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Internal(
            "no image was evaluated successfully".to_string(),
        ));
    }

    let n = rows.len() as f64;
    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let report = json!({
        "scale": scale,
        "backend": match backend { EvalBackend::Network => "network", EvalBackend::Identity => "identity" },
        "images": rows.iter().map(|r| json!({
            "image": r.image,
            "psnr_db": db_value(r.psnr_db),
            "ssim": r.ssim,
            "bicubic_psnr_db": db_value(r.bicubic_psnr_db),
            "bicubic_ssim": r.bicubic_ssim,
        })).collect::<Vec<_>>(),
        "average": {
            "images": rows.len(),
            "psnr_db": db_value(mean(|r| r.psnr_db)),
            "ssim": mean(|r| r.ssim),
            "bicubic_psnr_db": db_value(mean(|r| r.bicubic_psnr_db)),
            "bicubic_ssim": mean(|r| r.bicubic_ssim),
        },
        "errors": failures,
    });
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Internal(format!("serializing report: {e}")))?;
    text.push('\n');
    write_or_print(&text, out.as_deref())
}

// --------------------------------------------------------------------- sr

pub fn cmd_sr(args: &SrArgs) -> CliResult<()> {
    let jsoncfg = load_json_config(args.config.as_deref())?;
    let weights = required(pick(&args.weights, &jsoncfg.weights), "--weights")?;
    require_file(&weights, "weights")?;
    let input = required(pick(&args.input, &jsoncfg.input), "--input")?;
    require_file(&input, "input image")?;
    let out = required(pick(&args.out, &jsoncfg.out), "--out")?;
    require_writable(&out, "output image")?;

    let net = Network::from_store(WeightStore::load(&weights)?)?;
    if let Some(requested) = args.scale {
        if requested != net.spec().scale {
            return Err(CliError::usage(format!(
                "weights upscale by {} but --scale {requested} was requested",
                net.spec().scale
            )));
        }
    }
    let img = load_png(&input)?;
    let sr = net.super_resolve(&img.to_tensor())?;
    let sr = ImagePlane::from_tensor(&sr, ColorSpace::Rgb)?;
    save_png(&sr, &out)?;
    println!(
        "wrote {} ({}x{}, x{} of {}x{})",
        out.display(),
        sr.width(),
        sr.height(),
        net.spec().scale,
        img.width(),
        img.height()
    );
    Ok(())
}

// ---------------------------------------------------------------- analyze

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let jsoncfg = load_json_config(args.config.as_deref())?;
    let spec = resolve_spec(&args.spec, &jsoncfg)?;
    let report = default_cost_report(&spec)?;
    let text = if args.csv {
        report.render_csv()
    } else {
        let mut text = report.render_text();
        let r = block_weight_ratios()?;
        text.push_str(&format!(
            "block weights vs residual baseline: standard {:.2}%, depthwise-separable {:.2}%, depthwise {:.2}%\n",
            100.0 * r.spindle_ratio,
            100.0 * r.separable_ratio,
            100.0 * r.depthwise_ratio,
        ));
        text
    };
    write_or_print(&text, pick(&args.out, &jsoncfg.out).as_deref())
}

// -------------------------------------------------------------- dump-sffm

pub fn cmd_dump_sffm(args: &DumpSffmArgs) -> CliResult<()> {
    let jsoncfg = load_json_config(args.config.as_deref())?;
    let weights = required(pick(&args.weights, &jsoncfg.weights), "--weights")?;
    require_file(&weights, "weights")?;
    let input = required(pick(&args.input, &jsoncfg.input), "--input")?;
    require_file(&input, "input image")?;

    let net = Network::from_store(WeightStore::load(&weights)?)?;
    let img = load_png(&input)?;
    let csv = dump_fusion_weights(&net, &img)?;
    write_or_print(&csv, pick(&args.out, &jsoncfg.out).as_deref())
}

// --------------------------------------------------------------- selftest

pub fn cmd_selftest() -> CliResult<()> {
    let outcomes = selftest::run_all();
    print!("{}", selftest::render_report(&outcomes));
    if selftest::all_passed(&outcomes) {
        Ok(())
    } else {
        let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
        Err(CliError::Internal(format!("{failed} self-check(s) failed")))
    }
}
