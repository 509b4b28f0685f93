use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use taustar::inference::{
    test_asymptotic_with, AxisKind, PowerCalculator, SpectrumSummary, TestResult, MIN_PERMUTATIONS,
};
use taustar::simulate::{
    convergence_study, empirical_sample_size, power_study, tau_star_curve, GridPattern, MarginalLaw, MixedDesign,
    Scenario, ScenarioFamily, DEFAULT_REPS,
};
use taustar::spectrum::DEFAULT_EPS;
use taustar::{
    spectrum_continuous, spectrum_discrete, spectrum_mixed, test_permutation, DiscreteMarginal, MarginalSpec,
    MixtureSpectrum, NullDistribution, PowerRequest,
};

use crate::error::{CliError, CliResult};
use crate::input::read_sample;
use crate::report::{envelope, render, to_value, write_rows, Format};

/// Axis types: `c` continuous, `d` discrete, x first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginals {
    Auto,
    Cc,
    Dd,
    Dc,
    Cd,
}

impl Marginals {
    fn axes(self) -> (AxisKind, AxisKind) {
        use AxisKind::{Auto, Continuous as C, Discrete as D};
        match self {
            Marginals::Auto => (Auto, Auto),
            Marginals::Cc => (C, C),
            Marginals::Dd => (D, D),
            Marginals::Dc => (D, C),
            Marginals::Cd => (C, D),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Asymptotic,
    Permutation,
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    /// Two-column CSV file (optional header), or `-` for stdin.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Marginals::Auto)]
    pub marginals: Marginals,
    #[arg(long, value_enum, default_value_t = Method::Asymptotic)]
    pub method: Method,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of random permutations for `--method permutation`.
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Truncation level of continuous spectra.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(skip)]
    pub format: Format,
}

#[derive(Serialize)]
struct TestBody {
    #[serde(flatten)]
    result: TestResult,
    reject: bool,
    tail_bound: Option<f64>,
}

pub fn test(a: &TestArgs, out: &mut dyn Write) -> CliResult<()> {
    check_alpha(a.alpha)?;
    if a.method == Method::Permutation && a.permutations < MIN_PERMUTATIONS {
        return Err(CliError::Usage(format!("--permutations must be at least {MIN_PERMUTATIONS}")));
    }
    let s = read_sample(&a.input)?;
    let result = match a.method {
        Method::Asymptotic => {
            let (x, y) = a.marginals.axes();
            test_asymptotic_with(&s, &MarginalSpec::new(x, y), a.eps)
        }
        Method::Permutation => test_permutation(&s, a.permutations, a.seed),
    }
    .map_err(CliError::data)?;
    let body = TestBody {
        reject: result.p_value <= a.alpha,
        tail_bound: result.spectrum.as_ref().map(|sp| sp.tail_bound),
        result,
    };
    render(&envelope("test", a, &body)?, a.format, out)
}

fn parse_pmf(flag: &str, text: &str) -> CliResult<DiscreteMarginal> {
    let masses = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("{flag}: {t:?} is not a number"))))
        .collect::<CliResult<Vec<f64>>>()?;
    DiscreteMarginal::from_masses(masses).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn declared_spectrum(m: Marginals, pmf_x: Option<&str>, pmf_y: Option<&str>, eps: f64) -> CliResult<MixtureSpectrum> {
    let need = |flag: &str, v: Option<&str>| {
        v.ok_or_else(|| CliError::Usage(format!("{flag} is required for a discrete axis")))
            .and_then(|t| parse_pmf(flag, t))
    };
    let forbid = |flag: &str, v: Option<&str>| match v {
        Some(_) => Err(CliError::Usage(format!("{flag} given for a continuous axis"))),
        None => Ok(()),
    };
    let spectrum = match m {
        Marginals::Auto => return Err(CliError::Usage("the null law needs declared marginals (cc, dd, dc or cd)".into())),
        Marginals::Cc => {
            forbid("--pmf-x", pmf_x)?;
            forbid("--pmf-y", pmf_y)?;
            spectrum_continuous(eps)
        }
        Marginals::Dd => spectrum_discrete(&need("--pmf-x", pmf_x)?, &need("--pmf-y", pmf_y)?),
        Marginals::Dc => {
            forbid("--pmf-y", pmf_y)?;
            spectrum_mixed(&need("--pmf-x", pmf_x)?, eps)
        }
        Marginals::Cd => {
            forbid("--pmf-x", pmf_x)?;
            spectrum_mixed(&need("--pmf-y", pmf_y)?, eps)
        }
    };
    spectrum.map_err(CliError::usage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Eval {
    Cdf,
    Sf,
    Quantile,
    Density,
}

#[derive(Debug, Args, Serialize)]
pub struct NulldistArgs {
    #[arg(long, value_enum, default_value_t = Marginals::Cc)]
    pub marginals: Marginals,
    /// Masses of the x law on 1, 2, …, e.g. "0.5,0.5".
    #[arg(long)]
    pub pmf_x: Option<String>,
    #[arg(long)]
    pub pmf_y: Option<String>,
    #[arg(long, value_enum, default_value_t = Eval::Cdf)]
    pub eval: Eval,
    /// Point (or probability level for `quantile`).
    #[arg(long, allow_negative_numbers = true)]
    pub at: f64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(skip)]
    pub format: Format,
}

pub fn nulldist(a: &NulldistArgs, out: &mut dyn Write) -> CliResult<()> {
    let spectrum = declared_spectrum(a.marginals, a.pmf_x.as_deref(), a.pmf_y.as_deref(), a.eps)?;
    let null = NullDistribution::new(spectrum);
    let value = match a.eval {
        Eval::Cdf => null.cdf(a.at),
        Eval::Sf => null.sf(a.at),
        Eval::Quantile => null.quantile(a.at),
        Eval::Density => null.density(a.at),
    }
    .map_err(CliError::usage)?;
    let summary = SpectrumSummary::of(&null);
    let body = json!({ "value": value, "tail_bound": summary.tail_bound, "spectrum": to_value(&summary)? });
    render(&envelope("nulldist", a, &body)?, a.format, out)
}

#[derive(Debug, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long)]
    pub tau_star: f64,
    /// Upper bound on the projection variance σ₁²; 1/4 always holds.
    #[arg(long, default_value_t = 0.25)]
    pub sigma1sq_bound: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Target power; the sample-size bound is reported.
    #[arg(long, conflicts_with = "n")]
    pub beta: Option<f64>,
    /// Sample size at which to report the power bound instead.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value_t = Marginals::Cc)]
    pub marginals: Marginals,
    #[arg(long)]
    pub pmf_x: Option<String>,
    #[arg(long)]
    pub pmf_y: Option<String>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(skip)]
    pub format: Format,
}

const DEFAULT_BETA: f64 = 0.8;

pub fn power(a: &PowerArgs, out: &mut dyn Write) -> CliResult<()> {
    let spectrum = declared_spectrum(a.marginals, a.pmf_x.as_deref(), a.pmf_y.as_deref(), a.eps)?;
    let tail_bound = spectrum.tail_bound();
    let beta = a.beta.unwrap_or(DEFAULT_BETA);
    let req = PowerRequest { tau_star: a.tau_star, sigma1sq_bound: a.sigma1sq_bound, alpha: a.alpha, beta, spectrum };
    let calc = PowerCalculator::new(req).map_err(CliError::usage)?;
    let body = match a.n {
        Some(n) => json!({
            "critical_value": calc.critical_value(),
            "n": n,
            "power": calc.power(n).map_err(CliError::usage)?,
            "tail_bound": tail_bound,
        }),
        None => json!({
            "critical_value": calc.critical_value(),
            "beta": beta,
            "sample_size": calc.sample_size().map_err(CliError::usage)?,
            "tail_bound": tail_bound,
        }),
    };
    render(&envelope("power", a, &body)?, a.format, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Mean t* against the normal correlation.
    Curve,
    /// Law of n·t* against its limit under independence.
    Convergence,
    /// Rejection rates of t* and a classical competitor.
    Power,
    /// Monte Carlo minimum n reaching each target power.
    SampleSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    /// Bivariate normal; level = correlation.
    Normal,
    /// 5×5 grid mixtures; level = weight of the pattern.
    GridDiagonal,
    GridPermutation,
    GridLshape,
    GridUniform,
    /// Bernoulli(0.3) x, normal y shifted by level when x = 0.
    MixedBernoulli,
    /// Die-roll x, normal y shifted by level when x is even.
    MixedDie,
    /// Independent uniform{1..10} and 2^-i on {1..12}.
    IndepDiscrete,
    /// Independent standard normal and uniform{1..5}.
    IndepMixed,
}

impl ScenarioName {
    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }

    fn family(self) -> Option<ScenarioFamily> {
        let grid = |pattern| Some(ScenarioFamily::DiscreteGrid { pattern });
        match self {
            ScenarioName::Normal => Some(ScenarioFamily::BivariateNormal),
            ScenarioName::GridDiagonal => grid(GridPattern::Diagonal),
            ScenarioName::GridPermutation => grid(GridPattern::Permutation),
            ScenarioName::GridLshape => grid(GridPattern::LShape),
            ScenarioName::GridUniform => grid(GridPattern::UniformGrid),
            ScenarioName::MixedBernoulli => Some(ScenarioFamily::MixedMeanShift { design: MixedDesign::Bernoulli }),
            ScenarioName::MixedDie => Some(ScenarioFamily::MixedMeanShift { design: MixedDesign::DieEven }),
            ScenarioName::IndepDiscrete | ScenarioName::IndepMixed => None,
        }
    }

    fn at(self, level: f64) -> CliResult<Scenario> {
        let discrete = |m: taustar::Result<DiscreteMarginal>| {
            m.map(|marginal| MarginalLaw::Discrete { marginal }).map_err(CliError::usage)
        };
        Ok(match (self.family(), self) {
            (Some(f), _) => f.at(level),
            (None, ScenarioName::IndepDiscrete) => {
                let geometric: Vec<f64> = (1..=12).map(|i| 2f64.powi(-i)).collect();
                Scenario::Independent {
                    x: discrete(DiscreteMarginal::uniform(10))?,
                    y: discrete(DiscreteMarginal::proportional(&geometric))?,
                }
            }
            (None, _) => Scenario::Independent { x: MarginalLaw::StandardNormal, y: discrete(DiscreteMarginal::uniform(5))? },
        })
    }

    fn default_levels(self) -> Vec<f64> {
        match self.family() {
            Some(ScenarioFamily::MixedMeanShift { .. }) => (0..10).map(|k| k as f64 / 6.0).collect(),
            Some(_) => (0..=10).map(|k| k as f64 / 10.0).collect(),
            None => vec![0.0],
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub study: Study,
    #[arg(long, value_enum, default_value_t = ScenarioName::Normal)]
    pub scenario: ScenarioName,
    /// Dependence levels for `curve` and `power` (comma separated).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub levels: Vec<f64>,
    /// Single dependence level for `convergence` and `sample-size`.
    #[arg(long, allow_negative_numbers = true)]
    pub level: Option<f64>,
    /// Sample sizes for `convergence`.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Sample size for `curve` and `power`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Target powers for `sample-size`.
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    /// Largest n tried by `sample-size`.
    #[arg(long, default_value_t = 4096)]
    pub n_max: usize,
    /// Write `<out>.csv` and `<out>.json` instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(skip)]
    pub format: Format,
}

/// [`SimulateArgs`] with every default filled in.
#[derive(Debug, Serialize)]
struct SimulateConfig {
    study: Study,
    scenario: ScenarioName,
    levels: Vec<f64>,
    level: f64,
    sizes: Vec<usize>,
    n: usize,
    reps: usize,
    seed: u64,
    alpha: f64,
    betas: Vec<f64>,
    n_max: usize,
    eps: f64,
}

impl SimulateConfig {
    fn resolve(a: &SimulateArgs) -> CliResult<Self> {
        check_alpha(a.alpha)?;
        let levels = if a.levels.is_empty() { a.scenario.default_levels() } else { a.levels.clone() };
        let level = match (a.level, a.study) {
            (Some(l), _) => l,
            (None, Study::SampleSize) if a.scenario == ScenarioName::Normal => 0.6,
            (None, Study::SampleSize) => return Err(CliError::Usage("--level is required for this scenario".into())),
            (None, _) => 0.0,
        };
        let sizes = if a.sizes.is_empty() { vec![10, 15, 20, 25, 30, 40, 50, 60, 70, 80] } else { a.sizes.clone() };
        let n = a.n.unwrap_or(match a.study {
            Study::Curve => 300,
            _ => 50,
        });
        let betas = if a.betas.is_empty() { (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect() } else { a.betas.clone() };
        Ok(Self {
            study: a.study,
            scenario: a.scenario,
            levels,
            level,
            sizes,
            n,
            reps: a.reps,
            seed: a.seed,
            alpha: a.alpha,
            betas,
            n_max: a.n_max,
            eps: DEFAULT_EPS,
        })
    }
}

#[derive(Serialize)]
struct ConvergenceCsvRow {
    n: usize,
    reps: usize,
    ks_distance: f64,
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct PowerCsvRow<'a> {
    level: f64,
    test: &'a str,
    rate: f64,
    std_error: f64,
    chi_square_flagged: usize,
}

/// A finished study: its JSON body, flat rows and spectrum tail bound.
struct StudyOutput {
    body: Value,
    rows: Vec<Value>,
    tail_bound: Option<f64>,
}

fn rows_of<T: Serialize>(rows: &[T]) -> CliResult<Vec<Value>> {
    rows.iter().map(to_value).collect()
}

fn run_study(c: &SimulateConfig) -> CliResult<StudyOutput> {
    let family = || {
        c.scenario.family().ok_or_else(|| CliError::Usage(format!("scenario {} has no dependence level", c.scenario.name())))
    };
    match c.study {
        Study::Curve => {
            if c.scenario != ScenarioName::Normal {
                return Err(CliError::Usage("the curve study uses the normal scenario".into()));
            }
            let curve = tau_star_curve(&c.levels, c.n, c.reps, c.seed).map_err(CliError::usage)?;
            Ok(StudyOutput { body: to_value(&curve)?, rows: rows_of(&curve)?, tail_bound: None })
        }
        Study::Convergence => {
            let st = convergence_study(&c.scenario.at(c.level)?, &c.sizes, c.reps, c.seed).map_err(CliError::usage)?;
            let rows: Vec<ConvergenceCsvRow> = st
                .rows
                .iter()
                .map(|r| ConvergenceCsvRow { n: r.n, reps: r.reps, ks_distance: r.ks_distance, mean: r.mean, variance: r.variance })
                .collect();
            Ok(StudyOutput { tail_bound: Some(st.reference.tail_bound), body: to_value(&st)?, rows: rows_of(&rows)? })
        }
        Study::Power => {
            let st = power_study(&family()?, &c.levels, c.n, c.reps, c.alpha, c.seed).map_err(CliError::usage)?;
            let rows: Vec<PowerCsvRow> = st
                .rows
                .iter()
                .flat_map(|r| {
                    r.tests.iter().map(|t| PowerCsvRow {
                        level: r.level,
                        test: &t.test,
                        rate: t.rate,
                        std_error: t.std_error,
                        chi_square_flagged: r.chi_square_flagged,
                    })
                })
                .collect();
            Ok(StudyOutput { rows: rows_of(&rows)?, body: to_value(&st)?, tail_bound: None })
        }
        Study::SampleSize => {
            let sc = c.scenario.at(c.level)?;
            let pts = empirical_sample_size(&sc, &c.betas, c.alpha, c.reps, c.seed, c.n_max).map_err(CliError::usage)?;
            Ok(StudyOutput { body: to_value(&pts)?, rows: rows_of(&pts)?, tail_bound: None })
        }
    }
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = SimulateConfig::resolve(a)?;
    let result = run_study(&config)?;
    let doc = envelope("simulate", &config, &json!({ "tail_bound": result.tail_bound, "study": result.body }))?;
    let meta = envelope("simulate", &config, &json!({ "tail_bound": result.tail_bound }))?;
    match &a.out {
        Some(prefix) => {
            let csv_path = with_extension(prefix, "csv");
            let json_path = with_extension(prefix, "json");
            let mut f = BufWriter::new(File::create(&csv_path)?);
            write_rows(&meta, &result.rows, &mut f)?;
            f.flush()?;
            let mut f = BufWriter::new(File::create(&json_path)?);
            render(&doc, Format::Json, &mut f)?;
            f.flush()?;
            writeln!(out, "wrote {} and {}", csv_path.display(), json_path.display())?;
            Ok(())
        }
        None => match a.format {
            Format::Csv => write_rows(&meta, &result.rows, out),
            f => render(&doc, f, out),
        },
    }
}
