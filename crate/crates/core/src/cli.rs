//! Command-line front end: one subcommand per pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::decompose::{decompose_with_report, DecompositionConfig};
use crate::geometry::{load_mesh_file, Pose, PoseRecord, TriangleMesh};
use crate::graspgen::{
    candidates_on_sq, CandidateRecord, GraspCandidate, GripperModel, SamplingConfig,
};
use crate::planner::{evaluate_object, report_csv, EvalConfig, Planner, SqOrder, DEFAULT_BUDGET};
use crate::sdfgrid::{
    build_sdf, SdfGrid, DEFAULT_RESOLUTION, DEFAULT_TRUNCATION_FACTOR, MAX_RESOLUTION,
    MIN_RESOLUTION,
};
use crate::superquadric::{self, Superquadric};
use crate::validate::{ValidatedRecord, ValidationConfig, Validator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_VALID: i32 = 3;

pub const SDF_FILE: &str = "sdf.bin";
pub const SQS_FILE: &str = "sqs.json";
pub const DECOMPOSITION_FILE: &str = "decomposition.json";
pub const CANDIDATES_FILE: &str = "candidates.json";
pub const VALIDATED_FILE: &str = "validated.json";
pub const PLAN_FILE: &str = "plan.json";
pub const REPORT_FILE: &str = "report.csv";
pub const VIEWPOINTS_FILE: &str = "viewpoints.json";
pub const CONFIG_ECHO_FILE: &str = "config.resolved.json";

/// Every setting of a run. Missing fields take their defaults; command-line
/// flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh_path: Option<PathBuf>,
    /// Object label in the report; defaults to the mesh file stem.
    pub object: Option<String>,
    pub scale: f64,
    pub resolution: usize,
    pub truncation_factor: f64,
    pub decomposition: DecompositionConfig,
    pub sampling: SamplingConfig,
    pub validation: ValidationConfig,
    pub gripper: GripperModel,
    pub candidate_budget: usize,
    pub order: SqOrder,
    pub seed: u64,
    pub gripper_pose: Option<PoseRecord>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh_path: None,
            object: None,
            scale: 1.0,
            resolution: DEFAULT_RESOLUTION,
            truncation_factor: DEFAULT_TRUNCATION_FACTOR,
            decomposition: DecompositionConfig::default(),
            sampling: SamplingConfig::default(),
            validation: ValidationConfig::default(),
            gripper: GripperModel::default(),
            candidate_budget: DEFAULT_BUDGET,
            order: SqOrder::Closest,
            seed: 0,
            gripper_pose: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&self.resolution) {
            return Err(format!(
                "resolution {} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]",
                self.resolution
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err("scale must be positive".into());
        }
        if !(self.truncation_factor.is_finite() && self.truncation_factor > 0.0) {
            return Err("truncation_factor must be positive".into());
        }
        if self.candidate_budget == 0 {
            return Err("candidate_budget must be at least 1".into());
        }
        self.decomposition.validate().map_err(|e| e.to_string())?;
        self.sampling.validate().map_err(|e| e.to_string())?;
        self.validation.validate().map_err(|e| e.to_string())?;
        self.gripper.validate().map_err(|e| e.to_string())?;
        if let Some(p) = self.gripper_pose {
            Pose::try_from(p).map_err(|e| format!("gripper pose: {e}"))?;
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            resolution: self.resolution,
            truncation_factor: self.truncation_factor,
            decomposition: self.decomposition,
            sampling: self.sampling,
            validation: self.validation,
            gripper: self.gripper,
            candidate_budget: self.candidate_budget,
            order: self.order,
            seed: self.seed,
        }
    }

    fn object_name(&self) -> String {
        self.object.clone().unwrap_or_else(|| {
            self.mesh_path
                .as_deref()
                .and_then(Path::file_stem)
                .map_or_else(|| "object".to_owned(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "superq", about = "Superquadric grasp planning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Voxelize the mesh into a truncated signed distance grid.
    Sdf(Common),
    /// Decompose into superquadrics.
    Decompose(StageArgs),
    /// Sample grasp candidates on every primitive.
    Sample(StageArgs),
    /// Validate candidates against the mesh.
    Validate(StageArgs),
    /// Plan grasps for a gripper pose.
    Plan(PlanArgs),
    /// Run the viewpoint evaluation and write the report.
    Evaluate(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the hardware count.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Debug, Args)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    /// Grid to decompose instead of voxelizing the mesh.
    #[arg(long)]
    sdf: Option<PathBuf>,
    /// Primitives to use instead of decomposing.
    #[arg(long)]
    sqs: Option<PathBuf>,
    /// Candidates to validate instead of sampling.
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Row-major rotation followed by the translation.
    #[arg(long, num_args = 12, allow_negative_numbers = true, value_name = "X")]
    gripper_pose: Option<Vec<f64>>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
    NoValid,
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::NoValid => EXIT_NO_VALID,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Runs one command line (including the program name) and returns the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("configuration error: {m}"),
                CliError::Runtime(m) => eprintln!("error: {m}"),
                CliError::NoValid => eprintln!("no valid grasp found"),
            }
            e.code()
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Sdf(c) | Command::Evaluate(c) => c,
        Command::Decompose(s) | Command::Sample(s) | Command::Validate(s) => &s.common,
        Command::Plan(p) => &p.stage.common,
    }
}

fn resolve_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &c.mesh {
        config.mesh_path = Some(m.clone());
    }
    if let Some(r) = c.resolution {
        config.resolution = r;
    }
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(b) = c.budget {
        config.candidate_budget = b;
    }
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

fn execute(command: Command) -> Result<(), CliError> {
    let c = common(&command);
    let mut config = resolve_config(c)?;
    if let Command::Plan(p) = &command {
        if let Some(v) = &p.gripper_pose {
            let record = PoseRecord {
                rotation: v[..9].try_into().expect("nine values"),
                translation: v[9..].try_into().expect("three values"),
            };
            Pose::try_from(record).map_err(|e| CliError::Config(format!("gripper pose: {e}")))?;
            config.gripper_pose = Some(record);
        }
    }
    for path in [
        &config.mesh_path,
        input_path(&command, Input::Sdf),
        input_path(&command, Input::Sqs),
        input_path(&command, Input::Candidates),
    ]
    .into_iter()
    .flatten()
    {
        if !path.exists() {
            return Err(CliError::Config(format!(
                "{} does not exist",
                path.display()
            )));
        }
    }
    if c.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    fs::create_dir_all(&c.out).map_err(runtime)?;
    write_json(&c.out.join(CONFIG_ECHO_FILE), &config)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = c.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(runtime)?;
    let stage = Stage {
        config: &config,
        out: &c.out,
        command: &command,
    };
    pool.install(|| stage.run())
}

#[derive(Clone, Copy)]
enum Input {
    Sdf,
    Sqs,
    Candidates,
}

fn input_path(command: &Command, which: Input) -> &Option<PathBuf> {
    const NONE: &Option<PathBuf> = &None;
    let stage = match command {
        Command::Decompose(s) | Command::Sample(s) | Command::Validate(s) => s,
        Command::Plan(p) => &p.stage,
        _ => return NONE,
    };
    match which {
        Input::Sdf => &stage.sdf,
        Input::Sqs => &stage.sqs,
        Input::Candidates => &stage.candidates,
    }
}

struct Stage<'a> {
    config: &'a RunConfig,
    out: &'a Path,
    command: &'a Command,
}

impl Stage<'_> {
    fn run(&self) -> Result<(), CliError> {
        match self.command {
            Command::Sdf(_) => {
                let grid = self.grid()?;
                grid.save(&self.out.join(SDF_FILE)).map_err(runtime)?;
                Ok(())
            }
            Command::Decompose(_) => self.primitives().map(|_| ()),
            Command::Sample(_) => {
                let candidates = self.candidates()?;
                log::info!("{} candidates", candidates.len());
                Ok(())
            }
            Command::Validate(_) => {
                let mesh = self.mesh()?;
                let candidates = self.candidates()?;
                let c = self.config;
                let validator = Validator::new(&mesh, c.gripper, c.validation, c.seed);
                let out = validator.validate_all(&candidates);
                let records: Vec<ValidatedRecord> = out.iter().map(ValidatedRecord::from).collect();
                write_json(&self.out.join(VALIDATED_FILE), &records)
            }
            Command::Plan(_) => self.plan(),
            Command::Evaluate(_) => {
                let mesh = self.mesh()?;
                let name = self.config.object_name();
                let evaluation =
                    evaluate_object(&name, &mesh, &self.config.eval_config()).map_err(runtime)?;
                let csv = report_csv(std::slice::from_ref(&evaluation));
                fs::write(self.out.join(REPORT_FILE), &csv).map_err(runtime)?;
                write_json(&self.out.join(VIEWPOINTS_FILE), &evaluation.viewpoints)?;
                print!("{csv}");
                Ok(())
            }
        }
    }

    fn mesh(&self) -> Result<TriangleMesh, CliError> {
        let path = self
            .config
            .mesh_path
            .as_ref()
            .ok_or_else(|| CliError::Config("no mesh given (mesh_path or --mesh)".into()))?;
        load_mesh_file(path, self.config.scale).map_err(runtime)
    }

    fn grid(&self) -> Result<SdfGrid, CliError> {
        if let Some(path) = input_path(self.command, Input::Sdf) {
            return SdfGrid::load(path).map_err(runtime);
        }
        let mesh = self.mesh()?;
        build_sdf(&mesh, self.config.resolution, self.config.truncation_factor).map_err(runtime)
    }

    fn primitives(&self) -> Result<Vec<Superquadric>, CliError> {
        if let Some(path) = input_path(self.command, Input::Sqs) {
            let text = fs::read_to_string(path).map_err(runtime)?;
            return superquadric::from_json(&text).map_err(runtime);
        }
        let grid = self.grid()?;
        let (d, report) =
            decompose_with_report(&grid, &self.config.decomposition).map_err(runtime)?;
        let text = superquadric::to_json(&d.primitives).map_err(runtime)?;
        fs::write(self.out.join(SQS_FILE), text).map_err(runtime)?;
        write_json(&self.out.join(DECOMPOSITION_FILE), &report)?;
        log::info!(
            "{} primitives, coverage {:.4}",
            d.primitives.len(),
            report.coverage
        );
        Ok(d.primitives)
    }

    fn candidates(&self) -> Result<Vec<GraspCandidate>, CliError> {
        if let Some(path) = input_path(self.command, Input::Candidates) {
            let text = fs::read_to_string(path).map_err(runtime)?;
            let records: Vec<CandidateRecord> = serde_json::from_str(&text).map_err(runtime)?;
            return records
                .into_iter()
                .map(|r| GraspCandidate::try_from(r).map_err(runtime))
                .collect();
        }
        let sqs = self.primitives()?;
        let mut all = Vec::new();
        for (i, sq) in sqs.iter().enumerate() {
            let set = candidates_on_sq(sq, i, &self.config.gripper, &self.config.sampling);
            if set.rejected_width > 0 {
                log::info!(
                    "primitive {i}: {} candidates wider than the gripper",
                    set.rejected_width
                );
            }
            all.extend(set.candidates);
        }
        let records: Vec<CandidateRecord> = all.iter().map(CandidateRecord::from).collect();
        write_json(&self.out.join(CANDIDATES_FILE), &records)?;
        Ok(all)
    }

    fn plan(&self) -> Result<(), CliError> {
        let c = self.config;
        let pose = c
            .gripper_pose
            .ok_or_else(|| CliError::Config("plan needs --gripper-pose or gripper_pose".into()))?;
        let pose = Pose::try_from(pose).map_err(|e| CliError::Config(e.to_string()))?;
        let mesh = self.mesh()?;
        let sqs = self.primitives()?;
        let planner = Planner::new(&sqs, &mesh, c.gripper, c.sampling, c.validation, c.seed)
            .map_err(runtime)?;
        let result = planner.plan(&pose, c.candidate_budget, c.order);
        let records: Vec<ValidatedRecord> =
            result.grasps.iter().map(ValidatedRecord::from).collect();
        write_json(&self.out.join(VALIDATED_FILE), &records)?;
        let summary = PlanSummary {
            chosen_sq: result.chosen_sq,
            valid_count: result.valid_count(),
            tallies: result.tallies.clone(),
        };
        write_json(&self.out.join(PLAN_FILE), &summary)?;
        if summary.valid_count == 0 {
            println!("{}", serde_json::to_string(&summary).map_err(runtime)?);
            return Err(CliError::NoValid);
        }
        Ok(())
    }
}

/// Outcome of `plan`, written next to the validated grasps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub chosen_sq: Option<usize>,
    pub valid_count: usize,
    pub tallies: Vec<crate::planner::SqTally>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text).map_err(runtime)
}
