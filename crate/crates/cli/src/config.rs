use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fluxtorsion::deformation::{DeformationFamily, TGrid};
use fluxtorsion::exterior::{builtin, load_model, Document, ExteriorModel, FluxForm};
use fluxtorsion::{MetricStructure, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Builtin model (t3, t5, su2, su2xt1, su2xt2, tN) or a model file.
    #[arg(long, default_value = "t3")]
    pub model: String,
    /// vol[:λ], random[:seed], file (flux stored in the model file), file:<path>, zero.
    #[arg(long, default_value = "vol")]
    pub flux: String,
    /// Flux scale for `vol` without an explicit value.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Seed for random fluxes, metrics and gauge forms.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Deformation grid, geom:<min>:<max>:<count>.
    #[arg(long = "t-grid", default_value = "geom:1e-6:1:40")]
    pub t_grid: String,
    #[arg(long = "tol-rank", default_value_t = fluxtorsion::tolerance::RANK)]
    pub tol_rank: f64,
    #[arg(long = "tol-flat", default_value_t = fluxtorsion::tolerance::FLAT)]
    pub tol_flat: f64,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// What the model spec resolved to.
pub enum Source {
    Exterior { model: Box<ExteriorModel>, file_flux: Option<FluxForm> },
    Matrix(Box<fluxtorsion::exterior::MatrixComplexDoc>),
}

pub struct Setup {
    pub source: Source,
    pub family: DeformationFamily,
    pub flux: Option<FluxForm>,
    pub flux_desc: String,
    pub flux_seed: Option<u64>,
    pub grid: TGrid,
    pub tol: Tolerances,
    pub seed: u64,
}

impl Setup {
    pub fn exterior(&self) -> Option<&ExteriorModel> {
        match &self.source {
            Source::Exterior { model, .. } => Some(model),
            Source::Matrix(_) => None,
        }
    }

    pub fn model_name(&self) -> &str {
        self.family.name()
    }
}

pub type CliResult<T> = std::result::Result<T, String>;

pub fn tolerances(c: &Common) -> CliResult<Tolerances> {
    for (name, v) in [("--tol-rank", c.tol_rank), ("--tol-flat", c.tol_flat)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("{name} must be positive (got {v})"));
        }
    }
    Ok(Tolerances {
        rank: c.tol_rank,
        flat: c.tol_flat,
        ..Tolerances::default()
    })
}

fn resolve_source(spec: &str) -> CliResult<Source> {
    let path = Path::new(spec);
    if path.exists() || spec.ends_with(".json") {
        return match load_model(path).map_err(|e| format!("model file {spec}: {e}"))? {
            Document::Exterior { model, flux } => Ok(Source::Exterior {
                model: Box::new(model),
                file_flux: Some(flux),
            }),
            Document::Matrix(doc) => Ok(Source::Matrix(Box::new(doc))),
        };
    }
    builtin(spec)
        .map(|model| Source::Exterior { model: Box::new(model), file_flux: None })
        .map_err(|e| e.to_string())
}

/// Resolves a flux spec against an exterior model. Returns the flux, a
/// description and the seed used (for random fluxes).
pub fn resolve_flux(
    spec: &str,
    model: &ExteriorModel,
    file_flux: Option<&FluxForm>,
    lambda: f64,
    seed: u64,
) -> CliResult<(FluxForm, String, Option<u64>)> {
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    let fail = |e: fluxtorsion::Error| format!("flux {spec} on model {}: {e}", model.name());
    match head {
        "vol" => {
            let l = match arg {
                Some(a) => a.parse::<f64>().map_err(|_| format!("bad flux scale in '{spec}'"))?,
                None => lambda,
            };
            Ok((FluxForm::volume(model, l).map_err(fail)?, format!("vol:{l}"), None))
        }
        "random" => {
            let s = match arg {
                Some(a) => a.parse::<u64>().map_err(|_| format!("bad flux seed in '{spec}'"))?,
                None => seed,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            Ok((FluxForm::random_closed(model, &mut rng).map_err(fail)?, format!("random:{s}"), Some(s)))
        }
        "zero" => Ok((FluxForm::zero(), "zero".into(), None)),
        "file" => match arg {
            None => file_flux
                .cloned()
                .map(|f| (f, "file".into(), None))
                .ok_or_else(|| "flux 'file' needs a model file carrying a flux".to_string()),
            Some(p) => match load_model(p).map_err(|e| format!("flux file {p}: {e}"))? {
                Document::Exterior { model: other, flux } => {
                    if other.generators() != model.generators() {
                        return Err(format!("flux file {p} is over different generators than model {}", model.name()));
                    }
                    Ok((flux, format!("file:{p}"), None))
                }
                Document::Matrix(_) => Err(format!("flux file {p} is a matrix complex, not an exterior model")),
            },
        },
        _ => Err(format!("unknown flux spec '{spec}' (expected vol[:λ], random[:seed], file[:path] or zero)")),
    }
}

pub fn setup(c: &Common) -> CliResult<Setup> {
    let tol = tolerances(c)?;
    let grid = TGrid::parse(&c.t_grid).map_err(|e| e.to_string())?;
    let source = resolve_source(&c.model)?;
    match source {
        Source::Exterior { model, file_flux } => {
            let flux_spec = if c.flux == "vol" && file_flux.is_some() && c.model.ends_with(".json") {
                "file"
            } else {
                c.flux.as_str()
            };
            let (flux, flux_desc, flux_seed) = resolve_flux(flux_spec, &model, file_flux.as_ref(), c.lambda, c.seed)?;
            let family = DeformationFamily::from_exterior(&model, &flux, MetricStructure::identity(&model.space()), tol)
                .map_err(|e| format!("model {}: {e}", model.name()))?;
            Ok(Setup {
                source: Source::Exterior { model, file_flux },
                family,
                flux: Some(flux),
                flux_desc,
                flux_seed,
                grid,
                tol,
                seed: c.seed,
            })
        }
        Source::Matrix(doc) => {
            let family = DeformationFamily::from_matrix_doc(&doc, tol).map_err(|e| format!("model {}: {e}", doc.name))?;
            Ok(Setup {
                source: Source::Matrix(doc),
                family,
                flux: None,
                flux_desc: "file".into(),
                flux_seed: None,
                grid,
                tol,
                seed: c.seed,
            })
        }
    }
}

/// Parses `a..b` or `a:b` (half-open).
pub fn parse_seed_range(s: &str) -> CliResult<std::ops::Range<u64>> {
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| format!("seed range '{s}' should look like 0..100"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start in '{s}'"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range end in '{s}'"))?;
    if b <= a {
        return Err(format!("seed range '{s}' is empty"));
    }
    Ok(a..b)
}
