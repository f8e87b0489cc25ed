//! Command implementations: parse, validate, run, emit.
//!
//! All randomness flows from the single top-level seed through fixed
//! per-purpose offsets, so two runs of one config are byte-identical:
//! model init +1, synthetic data +2, subsetting +3, batch shuffling +4,
//! attacks +5, the criterion probe +6, landscape axes/probe +7.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use amata::{
    criterion_c, evaluate_robust, load_mnist_idx, pgd_perturb, pgd_perturb_traced,
    project_trajectory, subset, synth_gaussians, trainer, verify_pmp, AdvBatch, AttackInit,
    AttackSpec, AxesOptions, CandidateSet, Dataset, MlpSpec, Params, PgdInit, ScheduleSpec,
    ScheduleVariant, Tensor, ToyConfig, TrainConfig,
};

use crate::config::{Config, ConfigError};
use crate::CliError;

const SEED_MODEL: u64 = 1;
const SEED_DATA: u64 = 2;
const SEED_SUBSET: u64 = 3;
const SEED_SHUFFLE: u64 = 4;
const SEED_ATTACK: u64 = 5;
const SEED_PROBE: u64 = 6;
const SEED_LANDSCAPE: u64 = 7;

fn out_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.get_str("run", "out")?);
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(e, dir.clone()))?;
    Ok(dir)
}

/// Full write or no file: temp in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })()
    .map_err(|e| CliError::Io(e, path.to_path_buf()))
}

fn write_resolved(cfg: &Config, dir: &Path) -> Result<(), CliError> {
    let text = cfg.resolved_text()?;
    write_atomic(&dir.join("resolved.config"), text.as_bytes())
}

fn load_dataset(cfg: &Config, seed: u64) -> Result<Dataset, CliError> {
    let source = cfg.get_str("data", "source")?;
    let data = match source.as_str() {
        "synthetic" => synth_gaussians(
            cfg.get_usize("data", "n_per_class")?,
            cfg.get_usize("data", "dim")?,
            cfg.get_usize("data", "classes")?,
            cfg.get_f64("data", "separation")?,
            seed.wrapping_add(SEED_DATA),
        )?,
        "idx" => {
            let images = cfg.get_str("data", "images")?;
            let labels = cfg.get_str("data", "labels")?;
            if images.is_empty() || labels.is_empty() {
                return Err(ConfigError::for_key(
                    "data",
                    "images",
                    "idx source needs images and labels paths",
                )
                .into());
            }
            load_mnist_idx(Path::new(&images), Path::new(&labels))?
        }
        other => {
            return Err(ConfigError::for_key(
                "data",
                "source",
                format!("`{other}` is not one of synthetic|idx"),
            )
            .into())
        }
    };
    let n = cfg.get_usize("data", "subset")?;
    if n > 0 {
        Ok(subset(&data, n, seed.wrapping_add(SEED_SUBSET))?)
    } else {
        Ok(data)
    }
}

fn schedule_spec(cfg: &Config, horizon: usize) -> Result<ScheduleSpec, CliError> {
    let tau = cfg.get_f64("schedule", "tau")?;
    let k_min = cfg.get_usize("schedule", "k_min")?;
    let k_max = cfg.get_usize("schedule", "k_max")?;
    let variant = match cfg.get_str("schedule", "variant")?.as_str() {
        "constant" => ScheduleVariant::Constant,
        "linear" => ScheduleVariant::Linear,
        "exponential" => ScheduleVariant::Exponential {
            eta: cfg.get_f64("schedule", "eta")?,
        },
        "toy_optimal" => ScheduleVariant::ToyOptimal {
            theta0: cfg.get_f64("schedule", "theta0")?,
        },
        "explicit" => ScheduleVariant::Explicit {
            pairs: cfg.get_pair_list("schedule", "explicit")?,
        },
        other => {
            return Err(ConfigError::for_key(
                "schedule",
                "variant",
                format!("`{other}` is not a schedule variant"),
            )
            .into())
        }
    };
    Ok(ScheduleSpec::new(variant, k_min, k_max, tau, horizon)?)
}

fn attack_spec(cfg: &Config, seed: u64) -> Result<AttackSpec, CliError> {
    let init = match cfg.get_str("attack", "init")?.as_str() {
        "clean" => AttackInit::Clean,
        "uniform_random" => AttackInit::UniformRandom,
        other => {
            return Err(ConfigError::for_key(
                "attack",
                "init",
                format!("`{other}` is not one of clean|uniform_random"),
            )
            .into())
        }
    };
    Ok(AttackSpec::new(
        cfg.get_f64("attack", "eps")?,
        cfg.get_f64("attack", "alpha")?,
        cfg.get_usize("attack", "k_steps")?,
        init,
        cfg.get_usize("attack", "restarts")?,
        seed.wrapping_add(SEED_ATTACK),
    )?)
}

fn load_model(path: &Path) -> Result<Params, CliError> {
    if !path.exists() {
        return Err(CliError::Io(
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such model file"),
            path.to_path_buf(),
        ));
    }
    Ok(Params::load(path)?)
}

pub fn train(cfg: &Config) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let seed = cfg.get_u64("run", "seed")?;
    let epochs = cfg.get_usize("train", "epochs")?;
    let data = load_dataset(cfg, seed)?;
    let layers = cfg.get_usize_list("model", "layers")?;
    let spec = MlpSpec::new(layers, seed.wrapping_add(SEED_MODEL))?;

    let attack_eval = if cfg.get_bool("train", "attack_eval")? {
        Some(attack_spec(cfg, seed)?)
    } else {
        None
    };
    let config = TrainConfig {
        epochs,
        batch_size: cfg.get_usize("train", "batch_size")?,
        lr: cfg.get_f64("train", "lr")?,
        momentum: cfg.get_f64("train", "momentum")?,
        weight_decay: cfg.get_f64("train", "weight_decay")?,
        lr_milestones: cfg.get_usize_list("train", "lr_milestones")?,
        lr_decay_factor: cfg.get_f64("train", "lr_decay_factor")?,
        seed: seed.wrapping_add(SEED_SHUFFLE),
        schedule: schedule_spec(cfg, epochs)?,
        eps: cfg.get_f64("train", "eps")?,
        domain_clip: cfg.get_bool("train", "domain_clip")?,
        attack_eval,
    };

    let (params, rows) = amata::train(&config, &data, &spec)?;

    let wall = cfg.get_bool("train", "wall_clock")?;
    write_atomic(
        &dir.join("metrics.csv"),
        trainer::metrics_to_csv(&rows, wall).as_bytes(),
    )?;
    write_atomic(&dir.join("model.amlp"), &params.to_bytes())?;
    write_resolved(cfg, &dir)?;
    println!(
        "trained {} epochs; final clean accuracy {:.4}; artifacts in {}",
        rows.len(),
        rows.last().map(|r| r.clean_acc).unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(())
}

pub fn attack(cfg: &Config, model: &Path) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let seed = cfg.get_u64("run", "seed")?;
    let params = load_model(model)?;
    let data = load_dataset(cfg, seed)?;
    let spec = attack_spec(cfg, seed)?;
    let report = evaluate_robust(&params, &data, &spec)?;

    let payload = json!({
        "clean_acc": report.clean_acc,
        "robust_acc": report.robust_acc,
        "spec": {
            "eps": spec.eps,
            "alpha": spec.alpha,
            "k_steps": spec.k_steps,
            "init": match spec.init {
                AttackInit::Clean => "clean",
                AttackInit::UniformRandom => "uniform_random",
            },
            "restarts": spec.restarts,
            "seed": spec.seed,
        },
    });
    write_atomic(
        &dir.join("attack.json"),
        serde_json::to_string_pretty(&payload)
            .expect("json serialization")
            .as_bytes(),
    )?;
    write_resolved(cfg, &dir)?;
    println!(
        "clean {:.4}, robust {:.4}; report in {}",
        report.clean_acc,
        report.robust_acc,
        dir.display()
    );
    Ok(())
}

pub fn criterion(cfg: &Config, model: &Path) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let seed = cfg.get_u64("run", "seed")?;
    let params = load_model(model)?;
    let data = load_dataset(cfg, seed)?;

    let probe_n = cfg.get_usize("criterion", "probe")?.min(data.len());
    let probe_set = subset(&data, probe_n, seed.wrapping_add(SEED_PROBE))?;
    // The ball the candidate inner loops explore is the training ball.
    let eps = cfg.get_f64("train", "eps")?;
    let probe = AdvBatch::new(probe_set.inputs.clone(), probe_set.labels.clone(), eps)?;

    let tau = cfg.get_f64("criterion", "tau")?;
    let ks = cfg.get_usize_list("criterion", "candidate_k")?;
    let candidates = CandidateSet::budget_grid(&ks, tau)?;
    let current_k = cfg.get_usize("criterion", "current_k")?;
    let current_alpha_raw = cfg.get_str("criterion", "current_alpha")?;
    let current_alpha = if current_alpha_raw.is_empty() {
        tau / current_k as f64
    } else {
        cfg.get_f64("criterion", "current_alpha")?
    };
    let gamma = cfg.get_f64("criterion", "gamma")?;

    let report = criterion_c(&params, &probe, (current_k, current_alpha), &candidates, gamma)?;

    let payload = json!({
        "gamma": report.gamma,
        "current": { "k": report.current.0, "alpha": report.current.1 },
        "candidates": report
            .candidates
            .iter()
            .map(|c| json!({
                "k": c.k,
                "alpha": c.alpha,
                "grad_norm_sq": c.grad_norm_sq,
                "surrogate": c.surrogate,
            }))
            .collect::<Vec<_>>(),
        "c_value": report.c_value,
    });
    write_atomic(
        &dir.join("criterion.json"),
        serde_json::to_string_pretty(&payload)
            .expect("json serialization")
            .as_bytes(),
    )?;
    write_resolved(cfg, &dir)?;
    println!("C = {}; report in {}", report.c_value, dir.display());
    Ok(())
}

pub fn toy_control(cfg: &Config) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let toy = ToyConfig::new(
        cfg.get_f64("toy", "theta0")?,
        cfg.get_f64("toy", "tau")?,
        cfg.get_f64("toy", "gamma")?,
        cfg.get_f64("toy", "t_end")?,
        cfg.get_f64("toy", "dt")?,
    )?;
    let verification = verify_pmp(&toy, cfg.get_f64("toy", "grid_resolution")?)?;

    let mut csv = String::from("t,theta,p,alpha_star,k_star,alpha_argmax,hamiltonian\n");
    for row in &verification.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            trainer::format_sig(row.t),
            trainer::format_sig(row.theta),
            trainer::format_sig(row.p),
            trainer::format_sig(row.alpha_star),
            trainer::format_sig(row.k_star),
            trainer::format_sig(row.alpha_argmax),
            trainer::format_sig(row.hamiltonian),
        ));
    }
    write_atomic(&dir.join("toy.csv"), csv.as_bytes())?;
    write_resolved(cfg, &dir)?;
    println!(
        "max |alpha_argmax - alpha_star| = {:.3e}; trajectory in {}",
        verification.max_deviation,
        dir.display()
    );
    Ok(())
}

pub fn landscape(cfg: &Config, model: &Path) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let seed = cfg.get_u64("run", "seed")?;
    let params = load_model(model)?;
    let data = load_dataset(cfg, seed)?;
    let attack = attack_spec(cfg, seed)?;

    // Perturbation directions from the evaluation attack on a probe subset.
    let probe_n = cfg.get_usize("landscape", "probe")?.min(data.len());
    let probe = subset(&data, probe_n, seed.wrapping_add(SEED_LANDSCAPE))?;
    let probe_batch = AdvBatch::new(probe.inputs.clone(), probe.labels.clone(), attack.eps)?;
    let init = match attack.init {
        AttackInit::Clean => PgdInit::Clean,
        AttackInit::UniformRandom => PgdInit::UniformRandom {
            seed: seed.wrapping_add(SEED_LANDSCAPE),
        },
    };
    let outcome = pgd_perturb(&params, &probe_batch, attack.alpha, attack.k_steps, init)?;
    let perturbations: Vec<Vec<f64>> = (0..probe.len())
        .map(|i| {
            outcome
                .batch
                .x()
                .row(i)
                .iter()
                .zip(probe_batch.x0().row(i))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();

    let opts = AxesOptions {
        orthogonalize: cfg.get_bool("landscape", "orthogonalize")?,
        ..AxesOptions::default()
    };
    let axes = amata::compute_axes_with(&perturbations, seed.wrapping_add(SEED_LANDSCAPE), opts)?;

    let example_index = cfg.get_usize("landscape", "example_index")?;
    let (x0, label) = data.example(example_index)?;
    let x0 = x0.to_vec();

    let extent_raw = cfg.get_str("landscape", "extent")?;
    let extent = if extent_raw.is_empty() {
        attack.eps
    } else {
        cfg.get_f64("landscape", "extent")?
    };
    let resolution = cfg.get_usize("landscape", "resolution")?;
    let grid = amata::loss_grid(
        &params,
        &x0,
        label,
        &axes,
        extent,
        resolution,
        Some((0.0, 1.0)),
    )?;

    let offset =
        |i: usize| -extent + 2.0 * extent * i as f64 / (resolution - 1) as f64;
    let mut csv = String::from("i,j,sx,sy,loss\n");
    for (i, row) in grid.iter().enumerate() {
        for (j, loss) in row.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                j,
                trainer::format_sig(offset(i)),
                trainer::format_sig(offset(j)),
                trainer::format_sig(*loss),
            ));
        }
    }
    write_atomic(&dir.join("grid.csv"), csv.as_bytes())?;

    // Inner-loop trajectories at the attack step size for each listed K.
    let example_x = Tensor::from_vec(vec![1, x0.len()], x0.clone())?;
    let example_batch = AdvBatch::new(example_x, vec![label], attack.eps)?;
    for k in cfg.get_usize_list("landscape", "trajectory_steps")? {
        let (_, states) =
            pgd_perturb_traced(&params, &example_batch, attack.alpha, k, PgdInit::Clean)?;
        let points: Vec<Vec<f64>> = states.iter().map(|s| s.data().to_vec()).collect();
        let projected = project_trajectory(&points, &x0, &axes);
        let mut csv = String::from("step,sx,sy,loss\n");
        for (step, ((sx, sy), point)) in projected.iter().zip(&points).enumerate() {
            let x = Tensor::from_vec(vec![1, point.len()], point.clone())?;
            let loss = amata::per_example_losses(&params, &x, &[label])?[0];
            csv.push_str(&format!(
                "{},{},{},{}\n",
                step,
                trainer::format_sig(*sx),
                trainer::format_sig(*sy),
                trainer::format_sig(loss),
            ));
        }
        write_atomic(&dir.join(format!("traj_pgd{k}.csv")), csv.as_bytes())?;
    }
    write_resolved(cfg, &dir)?;
    println!("landscape artifacts in {}", dir.display());
    Ok(())
}
