use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::{remove_mean, ProblemSystem};
use crate::net::{save_params, train, Adamax, Mlp, TraceRow};
use crate::problems::{build_problem, error_metrics, infsup_constant, ErrorReport};
use crate::verify::{report, run_verification};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const ACTIVATION: &str = "tanh";
pub const THREADS: usize = 1;

/// Largest constrained dimension for which a run computes the loss
/// equivalence constants as a side product; above it they are skipped
/// rather than dominating the runtime.
pub const BOUNDS_DIM_CAP: usize = 1500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Solve,
    Infsup,
    Verify,
}

impl Mode {
    pub fn from_name(name: &str) -> Result<Mode> {
        match name {
            "train" => Ok(Mode::Train),
            "solve" => Ok(Mode::Solve),
            "infsup" => Ok(Mode::Infsup),
            "verify" => Ok(Mode::Verify),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected train, solve, infsup or verify"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Solve => "solve",
            Mode::Infsup => "infsup",
            Mode::Verify => "verify",
        }
    }
}

fn default_epochs() -> usize {
    1000
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

fn default_learning_rate() -> f64 {
    Adamax::DEFAULT_LR
}

fn default_out_dir() -> String {
    "out".to_string()
}

/// Everything one experiment needs; unset fields take the documented
/// defaults when read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    pub grid: [usize; 2],
    pub mode: Mode,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad config JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Train | Mode::Solve => {
                if self.problem.is_none() {
                    return Err(Error::Config(format!(
                        "mode {} requires a problem name",
                        self.mode.name()
                    )));
                }
            }
            Mode::Infsup => {
                if self.problem.is_some() || self.grid[0] != self.grid[1] {
                    return Err(Error::Config(
                        "infsup mode requires a square grid and no problem field".into(),
                    ));
                }
                if self.grid[0] < 4 {
                    return Err(Error::Config(
                        "infsup mode needs a grid of at least 4x4".into(),
                    ));
                }
            }
            Mode::Verify => {}
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

/// Parses a grid override of the form "NXxNY", e.g. "20x20".
pub fn parse_grid_spec(spec: &str) -> Result<[usize; 2]> {
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Config(format!("bad grid spec '{spec}', expected NXxNY")))
    };
    match spec.split_once('x') {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => Err(Error::Config(format!(
            "bad grid spec '{spec}', expected NXxNY"
        ))),
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub grid: Option<[usize; 2]>,
    pub mode: Option<Mode>,
    pub out: Option<String>,
}

pub fn apply_overrides(config: &mut ExperimentConfig, overrides: &Overrides) {
    if let Some(e) = overrides.epochs {
        config.epochs = e;
    }
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(g) = overrides.grid {
        config.grid = g;
    }
    if let Some(m) = overrides.mode {
        config.mode = m;
    }
    if let Some(o) = &overrides.out {
        config.out_dir = o.clone();
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    config_sha256: String,
    threads: usize,
    activation: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    composite_error: Option<f64>,
}

impl<'a> Manifest<'a> {
    fn new(config: &'a ExperimentConfig) -> Manifest<'a> {
        let mut hasher = Sha256::new();
        hasher.update(config.to_json().as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").unwrap();
        }
        Manifest {
            config,
            config_sha256: hex,
            threads: THREADS,
            activation: ACTIVATION,
            alpha: None,
            mu: None,
            beta: None,
            final_loss: None,
            best_error: None,
            composite_error: None,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

/// Executes one experiment and writes its artifacts under the configured
/// output directory.
pub fn run(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&dir)?;
    match config.mode {
        Mode::Train => run_train(config, &dir),
        Mode::Solve => run_solve(config, &dir),
        Mode::Infsup => run_infsup(config, &dir),
        Mode::Verify => run_verify(config, &dir),
    }
}

fn build_named(config: &ExperimentConfig) -> Result<ProblemSystem> {
    let name = config.problem.as_deref().expect("validated above");
    let grid = Grid::new(config.grid[0], config.grid[1])?;
    build_problem(name, grid)
}

fn network_sizes(config: &ExperimentConfig, sys: &ProblemSystem) -> Vec<usize> {
    let space = sys.space();
    let channels: usize = (0..space.num_parts())
        .map(|p| space.part(p).num_components())
        .sum();
    let mut sizes = vec![2];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(channels);
    sizes
}

fn attach_constants(manifest: &mut Manifest, sys: &ProblemSystem, config: &ExperimentConfig) {
    if sys.constrained_dim() <= BOUNDS_DIM_CAP {
        if let Ok(bounds) = sys.error_bounds() {
            manifest.alpha = Some(bounds.alpha);
            manifest.mu = Some(bounds.mu);
        }
        if sys.pressure_part().is_some() && config.grid[0] == config.grid[1] {
            if let Ok(beta) = infsup_constant(sys.grid()) {
                manifest.beta = Some(beta);
            }
        }
    }
}

fn run_train(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let sys = build_named(config)?;
    let sizes = network_sizes(config, &sys);
    let mut net = Mlp::new(&sizes, config.seed)?;
    let outcome = train(&sys, &mut net, config.epochs, config.learning_rate)?;
    write_trace(&dir.join("trace.csv"), &outcome.trace)?;

    net.params_mut().copy_from_slice(&outcome.best_params);
    let dofs = net.tabulate_dofs(sys.space())?;
    dump_fields(&sys, &dofs, dir)?;
    save_params(&net, config.seed, &dir.join("params.bin"))?;

    let mut manifest = Manifest::new(config);
    attach_constants(&mut manifest, &sys, config);
    if let Some(last) = outcome.trace.last() {
        manifest.final_loss = Some(last.loss);
        manifest.best_error = Some(last.best_err);
    }
    manifest.write(dir)?;

    if let Some(last) = outcome.trace.last() {
        println!(
            "trained {} for {} epochs: loss {:.6e}, best error {:.6e} (epoch {})",
            sys.name(),
            config.epochs,
            last.loss,
            last.best_err,
            outcome.best_epoch
        );
    } else {
        println!("trained {} for 0 epochs: nothing recorded", sys.name());
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn run_solve(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let sys = build_named(config)?;
    let reference = sys.reference().to_vec();
    dump_fields(&sys, &reference, dir)?;
    let metrics = error_metrics(&sys, &reference)?;
    let text = render_error_report(&metrics);
    fs::write(dir.join("error_report.txt"), &text)?;
    print!("{text}");

    let mut manifest = Manifest::new(config);
    attach_constants(&mut manifest, &sys, config);
    manifest.composite_error = Some(metrics.composite);
    manifest.write(dir)?;
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn render_error_report(metrics: &ErrorReport) -> String {
    let mut text = String::new();
    for (name, err) in &metrics.per_part {
        writeln!(text, "relative error {name}: {err:.6e}").unwrap();
    }
    writeln!(text, "relative error composite: {:.6e}", metrics.composite).unwrap();
    writeln!(
        text,
        "distance from direct solution: {:.6e}",
        metrics.discrete
    )
    .unwrap();
    text
}

fn run_infsup(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut ladder = Vec::new();
    let mut n = 4;
    while n <= config.grid[0] {
        let beta = infsup_constant(Grid::new(n, n)?)?;
        println!("n {:>4}  beta {:.12e}", n, beta);
        ladder.push((n, beta));
        n *= 2;
    }
    let mut csv = String::from("n,beta\n");
    for (n, beta) in &ladder {
        writeln!(csv, "{},{:.16e}", n, beta).unwrap();
    }
    fs::write(dir.join("beta_vs_N.csv"), csv)?;

    let mut manifest = Manifest::new(config);
    manifest.beta = ladder.last().map(|(_, b)| *b);
    manifest.write(dir)?;
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn run_verify(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let results = run_verification(config.seed);
    let text = report(&results);
    fs::write(dir.join("verify_report.txt"), &text)?;
    print!("{text}");
    Manifest::new(config).write(dir)?;
    let failed = results.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Error::VerifyFailed(format!("{failed} checks failed")));
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut text = format!("# activation={ACTIVATION} threads={THREADS}\n");
    text.push_str("epoch,loss,sqrt_loss,err_discrete,err_exact,best_err\n");
    for row in rows {
        writeln!(
            text,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            row.epoch, row.loss, row.sqrt_loss, row.err_discrete, row.err_exact, row.best_err
        )
        .unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes one CSV per field component, with row i holding the values along
/// constant x-index i, plus a grid coordinates file. Pressure parts are
/// shifted to zero mean before writing.
pub fn dump_fields(sys: &ProblemSystem, v: &[f64], dir: &Path) -> Result<()> {
    let space = sys.space();
    let fields = space.fields_from_vec(&sys.reconstruct(v))?;
    let grid = sys.grid();
    for (idx, field) in fields.iter().enumerate() {
        let field = if sys.pressure_part() == Some(idx) {
            remove_mean(field)
        } else {
            field.clone()
        };
        let name = space.part_name(idx);
        for c in 0..field.num_components() {
            let path = dir.join(format!("fields_{}{}.csv", name, component_suffix(&field, c)));
            let mut text = String::new();
            for j in 0..=grid.ny() {
                if j > 0 {
                    text.push(',');
                }
                write!(text, "j{j}").unwrap();
            }
            text.push('\n');
            for i in 0..=grid.nx() {
                for j in 0..=grid.ny() {
                    if j > 0 {
                        text.push(',');
                    }
                    write!(text, "{:.16e}", field.at(c, i, j)).unwrap();
                }
                text.push('\n');
            }
            fs::write(path, text)?;
        }
    }
    let mut coords = String::from("x,y\n");
    for i in 0..=grid.nx() {
        for j in 0..=grid.ny() {
            let (x, y) = grid.point(i, j);
            writeln!(coords, "{:.16e},{:.16e}", x, y).unwrap();
        }
    }
    fs::write(dir.join("coords.csv"), coords)?;
    Ok(())
}

fn component_suffix(field: &crate::field::GridFunction, c: usize) -> String {
    let shape = field.value_shape();
    if shape.is_empty() {
        return String::new();
    }
    let mut digits = vec![0usize; shape.len()];
    let mut rest = c;
    for (axis, &extent) in shape.iter().enumerate().rev() {
        digits[axis] = rest % extent;
        rest /= extent;
    }
    let mut out = String::from("_");
    for d in digits {
        write!(out, "{d}").unwrap();
    }
    out
}
