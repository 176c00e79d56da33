//! One function per subcommand. Each returns the process exit code on
//! success; errors are mapped to exit codes in `main`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use log::info;
use zsl_core::eval::{activation_report, GzslReport, McaReport, Space};
use zsl_core::io::{self, RunConfig, SynthConfig, TRAIN_REPORT};
use zsl_core::linalg::DenseMatrix;
use zsl_core::pipeline::{self, Dataset, TrainedModels, TransferResult};
use zsl_core::zoom::{self, MaskConfig, ZoomParams};
use zsl_core::{validate_dataset, ImageGrid, Result, ZslError};

use crate::{EvalArgs, GenSynthArgs, ReportArgs, RunArgs, TrainArgs, TransferArgs, ZoomDemoArgs};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| ZslError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ZslError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

struct Loaded {
    cfg: RunConfig,
    ds: Dataset<f64>,
    trained: TrainedModels<f64>,
}

fn load_trained_run(args: &RunArgs) -> Result<Loaded> {
    let cfg = load_run(args)?;
    let ds = io::load_dataset(&cfg)?;
    let trained = io::load_trained(&cfg.output_dir, ds.scales.len())?;
    Ok(Loaded { cfg, ds, trained })
}

fn load_transfer_run(args: &RunArgs) -> Result<(Loaded, TransferResult<f64>)> {
    let run = load_trained_run(args)?;
    let transfer = io::load_transfer(&run.cfg.output_dir, &run.ds.split)?;
    Ok((run, transfer))
}

fn space_file(prefix: &str, space: Space) -> String {
    format!("{prefix}_{space}.csv")
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ZslError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| ZslError::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    apply!(
        seed,
        c_s,
        c_u,
        k,
        k_lat_signal,
        d,
        n_per_class,
        noise_sigma,
        latent_amplitude,
        scales
    );
    cfg.validate()?;
    let ds = io::gen_synthetic(&cfg)?;
    io::write_synthetic(&ds, &cfg, &args.out)?;
    println!(
        "wrote {} scale(s), {} samples, {} seen / {} unseen classes to {}",
        cfg.scales,
        ds.scales[0].len(),
        cfg.c_s,
        cfg.c_u,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn validate(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_run(args)?;
    let scales = io::load_scales(&cfg)?;
    let attrs = io::load_attributes(&cfg.attributes)?;
    let split = io::load_split_unchecked(&cfg.split)?;
    let report = validate_dataset(&scales, &attrs, &split);
    if report.is_valid() {
        println!(
            "ok: {} scale(s), {} samples, {} seen / {} unseen classes",
            scales.len(),
            scales.first().map_or(0, |s| s.len()),
            split.seen_classes.len(),
            split.unseen_classes.len()
        );
        return Ok(ExitCode::SUCCESS);
    }
    for v in &report.violations {
        println!("{v}");
    }
    eprintln!("zsl: dataset has {} violation(s)", report.violations.len());
    Ok(ExitCode::from(1))
}

pub fn train(args: &TrainArgs) -> Result<ExitCode> {
    let mut cfg = load_run(&args.run)?;
    let t = &mut cfg.pipeline.train;
    if let Some(seed) = args.seed {
        t.seed = seed;
    }
    if let Some(e) = args.epochs {
        t.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        t.learning_rate = lr;
    }
    cfg.pipeline.validate()?;
    let ds = io::load_dataset(&cfg)?;
    info!(
        "training {} scale(s) for {} epochs, seed {}",
        ds.scales.len(),
        cfg.pipeline.train.epochs,
        cfg.pipeline.train.seed
    );
    let trained = pipeline::fit(&ds, &cfg.pipeline)?;
    io::save_trained(&cfg.output_dir, &trained)?;
    let last = trained
        .report
        .epoch_totals()
        .last()
        .copied()
        .unwrap_or(f64::NAN);
    println!(
        "trained {} model(s) on {} samples ({} held out); final loss {last:.6}",
        trained.models.len(),
        trained.train_indices.len(),
        trained.holdout_indices.len()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn transfer(args: &TransferArgs) -> Result<ExitCode> {
    let mut run = load_trained_run(&args.run)?;
    if let Some(lambda) = args.lambda {
        run.cfg.pipeline.transfer.lambda = lambda;
    }
    run.cfg.pipeline.validate()?;
    let t = pipeline::fit_transfer(&run.ds, &run.trained, &run.cfg.pipeline)?;
    io::save_transfer(&run.cfg.output_dir, &t)?;
    println!(
        "transferred {} unseen prototypes from {} seen classes (lambda {})",
        t.unseen.len(),
        t.seen.len(),
        run.cfg.pipeline.transfer.lambda
    );
    Ok(ExitCode::SUCCESS)
}

/// Zero-shot predictions as CSV rows, with the MCA report.
struct ZslRun {
    output_dir: PathBuf,
    space: Space,
    rows: Vec<String>,
    report: McaReport,
}

fn zsl_run(args: &EvalArgs) -> Result<ZslRun> {
    let (run, transfer) = load_transfer_run(&args.run)?;
    let space = args.space.unwrap_or(run.cfg.space);
    let (idx, pred, report) =
        pipeline::evaluate_zsl(&run.ds, &run.trained, &transfer, space, &run.cfg.pipeline)?;
    let labels = run.ds.labels();
    let rows = idx
        .iter()
        .zip(&pred.predicted)
        .enumerate()
        .map(|(r, (&i, p))| {
            let col = pred
                .class_ids
                .iter()
                .position(|c| c == p)
                .expect("predicted class is scored");
            format!("{i},{},{p},{:e}", labels[i], pred.scores[(r, col)])
        })
        .collect();
    Ok(ZslRun {
        output_dir: run.cfg.output_dir,
        space,
        rows,
        report,
    })
}

pub fn predict(args: &EvalArgs) -> Result<ExitCode> {
    let ZslRun {
        output_dir,
        space,
        rows,
        ..
    } = zsl_run(args)?;
    create_dir(&output_dir)?;
    let path = output_dir.join(space_file("predictions", space));
    let mut text = String::from("index,label,predicted,score\n");
    for r in &rows {
        text.push_str(r);
        text.push('\n');
    }
    write_text(&path, &text)?;
    println!(
        "wrote {} predictions ({space}) to {}",
        rows.len(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: &EvalArgs) -> Result<ExitCode> {
    let run = zsl_run(args)?;
    create_dir(&run.output_dir)?;
    let path = run.output_dir.join(space_file("mca", run.space));
    write_text(&path, &run.report.to_csv())?;
    println!("MCA ({}): {:.2}", run.space, run.report.mca);
    Ok(ExitCode::SUCCESS)
}

pub fn gzsl_eval(args: &EvalArgs) -> Result<ExitCode> {
    let (run, transfer) = load_transfer_run(&args.run)?;
    let space = args.space.unwrap_or(run.cfg.space);
    let report: GzslReport =
        pipeline::evaluate_gzsl(&run.ds, &run.trained, &transfer, space, &run.cfg.pipeline)?;
    create_dir(&run.cfg.output_dir)?;
    write_text(
        &run.cfg.output_dir.join(space_file("gzsl", space)),
        &report.to_csv(),
    )?;
    println!(
        "gZSL ({space}): A_u {:.2}, A_s {:.2}, H {:.2}",
        report.a_u, report.a_s, report.h
    );
    Ok(ExitCode::SUCCESS)
}

/// Off-center Gaussian blob on a faint background, so the window search has
/// a clear target.
fn synthetic_image(size: usize) -> Result<ImageGrid> {
    if size < 2 {
        return Err(ZslError::InvalidArgument(format!(
            "image size must be >= 2, got {size}"
        )));
    }
    let n = size as f64;
    let (cy, cx, sd) = (0.3 * n, 0.65 * n, 0.12 * n);
    let img = ImageGrid::from_fn(size, size, 1, |i, j, _| {
        let (dy, dx) = (i as f64 + 0.5 - cy, j as f64 + 0.5 - cx);
        0.05 + (-(dy * dy + dx * dx) / (2.0 * sd * sd)).exp()
    });
    Ok(img)
}

fn load_image(path: &Path) -> Result<ImageGrid> {
    let m: DenseMatrix<f64> = io::load_matrix(path)?;
    let (h, w) = m.shape();
    ImageGrid::new(h, w, 1, m.into_vec())
}

fn rows_csv(rows: &[Vec<f64>]) -> Result<String> {
    let m = DenseMatrix::from_rows(rows)?;
    Ok(io::format_csv_matrix(&m))
}

pub fn zoom_demo(args: &ZoomDemoArgs) -> Result<ExitCode> {
    let image = match &args.image {
        Some(p) => load_image(p)?,
        None => synthetic_image(args.size)?,
    };
    let (h, w, _) = image.shape();
    let cfg = MaskConfig {
        steepness: args.steepness,
        rescale: true,
    };
    cfg.validate()?;
    let (params, window) = match (args.zx, args.zy, args.zs) {
        (Some(x), Some(y), Some(s)) => (ZoomParams::new(x, y, s)?, None),
        _ => {
            let m = zoom::best_window(&image, args.window_frac)?;
            (m.to_zoom(h, w), Some(m))
        }
    };
    let out = args.out_size.unwrap_or(h.max(w));
    let mask = zoom::soft_mask(&params, &cfg, h, w)?;
    let zoomed = zoom::zoom_forward(&image, &params, &cfg, out, out)?;

    create_dir(&args.out)?;
    write_text(
        &args.out.join("input.csv"),
        &rows_csv(&image.channel_rows(0))?,
    )?;
    write_text(&args.out.join("mask.csv"), &rows_csv(&mask.rows())?)?;
    write_text(
        &args.out.join("zoomed.csv"),
        &rows_csv(&zoomed.channel_rows(0))?,
    )?;
    let summary = serde_json::json!({
        "height": h,
        "width": w,
        "zoom": params,
        "effective_steepness": cfg.effective_steepness(h, w),
        "window": window.map(|m| serde_json::json!({
            "row": m.row, "col": m.col, "side": m.side, "sum": m.sum,
        })),
        "output_size": out,
    });
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_text(&args.out.join("zoom.json"), &json)?;
    println!(
        "zoom z_x {:.4} z_y {:.4} z_s {:.4}; wrote mask.csv and zoomed.csv to {}",
        params.z_x,
        params.z_y,
        params.z_s,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn read_optional(path: &Path) -> Option<String> {
    fs::read_to_string(path).ok()
}

pub fn report(args: &ReportArgs) -> Result<ExitCode> {
    let cfg = load_run(&args.run)?;
    let dir = &cfg.output_dir;
    println!("output directory: {}", dir.display());

    if let Some(text) = read_optional(&dir.join(TRAIN_REPORT)) {
        let last = text.lines().skip(1).filter(|l| !l.is_empty()).last();
        if let Some(l) = last {
            println!("last training record (epoch,scale,l_att,l_lat,total): {l}");
        }
    } else {
        println!("no training report; run train first");
    }
    for space in [Space::Ua, Space::La, Space::UaLa] {
        if let Some(text) = read_optional(&dir.join(space_file("mca", space))) {
            if let Some(l) = text.lines().find(|l| l.starts_with("mca,")) {
                println!("{space}: MCA {}", l.trim_start_matches("mca,,,"));
            }
        }
        if let Some(text) = read_optional(&dir.join(space_file("gzsl", space))) {
            if let Some(l) = text.lines().nth(1) {
                println!("{space}: gZSL a_u,a_s,h {l}");
            }
        }
    }

    if let Some(element) = args.element {
        let ds = io::load_dataset(&cfg)?;
        let trained = io::load_trained(dir, ds.scales.len())?;
        let model = trained.models.get(args.scale).ok_or_else(|| {
            ZslError::InvalidArgument(format!(
                "scale {} out of range ({} scales)",
                args.scale,
                trained.models.len()
            ))
        })?;
        let rep = activation_report(
            model,
            &ds.scales[args.scale],
            args.space,
            element,
            args.top_k,
        )?;
        let path = dir.join(format!(
            "activation_{}_s{}_e{element}.csv",
            args.space, args.scale
        ));
        create_dir(dir)?;
        write_text(&path, &rep.to_csv())?;
        print!("{}", rep.to_csv());
    }
    Ok(ExitCode::SUCCESS)
}
