//! Command line interface.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use keydeform::checkpoint::Checkpoint;
use keydeform::deformer::{train, ModelConfig, TrainConfig};
use keydeform::geom::{generate_synthetic_family, load_obj, write_obj, Family, Mesh};
use keydeform::prior::PcaPrior;
use keydeform::Rng;

use crate::ops::{
    amplify, evaluate, fit_prior, keypoints_json, obj_files, read_keypoints, write_synthetic, write_text, Classify,
    EvalOptions, Failure, Model, Outcome, Protocol, Sweep,
};
use crate::server::{router, AppState, DEFAULT_MAX_UPLOAD};

#[derive(Debug, Parser)]
#[command(name = "keydeform", version, about = "Keypoint-driven cage deformation: train, infer, edit, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a keypoint deformer on a directory of OBJ files or a synthetic family.
    Train(TrainArgs),
    /// Predict keypoints for a mesh.
    Keypoints {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deform a mesh so its keypoints move to the given targets.
    Deform {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// JSON keypoints in the mesh's coordinates.
        #[arg(long)]
        target_keypoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an evaluation protocol against an annotation file.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        protocol: Protocol,
        #[arg(long)]
        annotations: PathBuf,
        /// Report path; `.csv` writes the table, anything else JSON.
        #[arg(long)]
        out: PathBuf,
        /// Fraction of shapes used to fit the PCK regressor.
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        /// Neighbourhood radius for the part protocol.
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
    },
    /// Fit a PCA prior to the keypoints a checkpoint predicts on a shape collection.
    Prior {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 8)]
        n_basis: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one prior coefficient and write the deformed meshes.
    Amplify {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// `basis:index,min,max,steps`, bounds in standard deviations.
        #[arg(long)]
        sweep: Sweep,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic family as OBJ files plus landmark and part annotations.
    Synth {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Part-labelled surface points per shape.
        #[arg(long, default_value_t = 2048)]
        labelled_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the interactive editing API.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long, env = "KEYDEFORM_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static files served under `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_UPLOAD)]
        max_upload: usize,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of OBJ files.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Synthetic family: winged, table or box.
    #[arg(long)]
    pub synthetic: Option<Family>,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Seed for synthetic generation.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

impl DataArgs {
    /// Meshes and a category name.
    pub fn load(&self) -> Outcome<(Vec<Mesh>, String)> {
        if let Some(family) = self.synthetic {
            if self.count == 0 {
                return Err(Failure::invalid("--count must be positive"));
            }
            let shapes = generate_synthetic_family(family, self.count, &mut Rng::new(self.data_seed));
            return Ok((shapes.into_iter().map(|s| s.mesh).collect(), family.name().into()));
        }
        let dir = self.data.as_ref().expect("clap enforces --data or --synthetic");
        let meshes = obj_files(dir)?.iter().map(load_obj).collect::<keydeform::Result<Vec<_>>>().or_invalid()?;
        let category = dir.file_name().map_or("custom".into(), |n| n.to_string_lossy().into_owned());
        Ok((meshes, category))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 12)]
    pub keypoints: usize,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Points sampled per shape.
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_kpt: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub alpha_inf: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                num_keypoints: self.keypoints,
                ..ModelConfig::default()
            },
            lr: self.lr,
            alpha_kpt: self.alpha_kpt,
            alpha_inf: self.alpha_inf,
            points: self.points,
            iterations: self.iters,
            batch_size: self.batch,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

fn load_mesh(path: &Path) -> Outcome<Mesh> {
    load_obj(path).or_invalid()
}

fn load_prior(path: &Path) -> Outcome<PcaPrior> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::invalid(keydeform::Error::io(path, e)))?;
    PcaPrior::from_json(&text).or_invalid()
}

pub fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Train(args) => run_train(&args),
        Command::Keypoints { ckpt, mesh, out } => {
            let model = Model::load(&ckpt)?;
            let shape = model.prepare(&load_mesh(&mesh)?).or_invalid()?;
            write_text(&out, &keypoints_json(&shape.keypoints_original()))
        }
        Command::Deform {
            ckpt,
            mesh,
            target_keypoints,
            out,
        } => {
            let model = Model::load(&ckpt)?;
            let target = read_keypoints(&target_keypoints)?;
            if target.len() != model.num_keypoints() {
                return Err(Failure::invalid(format!(
                    "checkpoint has {} keypoints, target file has {}",
                    model.num_keypoints(),
                    target.len()
                )));
            }
            let shape = model.prepare(&load_mesh(&mesh)?).or_invalid()?;
            let deformed = shape.deform(&target).or_runtime()?;
            write_text(&out, &write_obj(&deformed))
        }
        Command::Eval {
            ckpt,
            protocol,
            annotations,
            out,
            train_fraction,
            radius,
        } => {
            if !(0.0..1.0).contains(&train_fraction) || radius.is_nan() || radius <= 0.0 {
                return Err(Failure::invalid("--train-fraction must be in [0, 1) and --radius positive"));
            }
            let model = Model::load(&ckpt)?;
            let options = EvalOptions {
                train_fraction,
                radius,
                ..EvalOptions::default()
            };
            let report = evaluate(&model, protocol, &annotations, &options)?;
            let text = if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                report.csv
            } else {
                serde_json::to_string_pretty(&report.json).expect("report serializes")
            };
            write_text(&out, &text)
        }
        Command::Prior { ckpt, data, n_basis, out } => {
            let model = Model::load(&ckpt)?;
            let (meshes, _) = data.load()?;
            let prior = fit_prior(&model, &meshes, n_basis)?;
            if prior.rank_deficient {
                eprintln!("warning: keypoints span fewer than {n_basis} directions; trailing bases carry no variance");
            }
            write_text(&out, &prior.to_json())
        }
        Command::Amplify {
            ckpt,
            prior,
            mesh,
            sweep,
            out,
        } => {
            let model = Model::load(&ckpt)?;
            let prior = load_prior(&prior)?;
            amplify(&model, &prior, &load_mesh(&mesh)?, sweep, &out).map(|_| ())
        }
        Command::Synth {
            family,
            count,
            seed,
            labelled_points,
            out,
        } => {
            if count == 0 || labelled_points == 0 {
                return Err(Failure::invalid("--count and --labelled-points must be positive"));
            }
            write_synthetic(family, count, seed, labelled_points, &out).map(|_| ())
        }
        Command::Serve {
            ckpt,
            prior,
            port,
            host,
            static_dir,
            max_upload,
        } => {
            let model = Model::load(&ckpt)?;
            let prior = prior.as_deref().map(load_prior).transpose()?;
            if let Some(p) = &prior {
                if p.num_keypoints != model.num_keypoints() {
                    eprintln!(
                        "warning: prior has {} keypoints, checkpoint has {}; prior requests will fail",
                        p.num_keypoints,
                        model.num_keypoints()
                    );
                }
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().or_invalid()?;
            let app = router(Arc::new(AppState::new(model, prior)), static_dir, max_upload);
            let rt = tokio::runtime::Runtime::new().or_runtime()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.or_runtime()?;
                eprintln!("listening on http://{addr}");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .or_runtime()
            })
        }
    }
}

fn run_train(args: &TrainArgs) -> Outcome<()> {
    let config = args.config();
    if config.model.num_keypoints == 0 || config.iterations == 0 || config.batch_size == 0 || config.points == 0 {
        return Err(Failure::invalid("--keypoints, --iters, --batch and --points must be positive"));
    }
    let (meshes, category) = args.data.load()?;
    if meshes.len() < 2 {
        return Err(Failure::invalid("training needs at least two shapes"));
    }
    let trained = train(&meshes, &config).map_err(|e| match e {
        keydeform::Error::Config(_) | keydeform::Error::InfluenceTooSparse { .. } => Failure::invalid(e),
        _ => Failure::runtime(e),
    })?;
    let log = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log.jsonl");
        p.into()
    });
    write_text(&log, &trained.log_jsonl())?;
    let hyper = serde_json::to_value(&config).expect("config serializes");
    let ckpt = Checkpoint::new(trained.model, &category, hyper);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(keydeform::Error::io(dir, e)))?;
    }
    ckpt.save(&args.out).or_runtime()?;
    if let Some(e) = trained.diverged {
        // the last finite parameters were saved; report the divergence
        return Err(Failure::runtime(e));
    }
    Ok(())
}
