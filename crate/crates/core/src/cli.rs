//! Command-line front end: configuration, commands and output rendering.

use std::cmp::Ordering;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::asympint::check_hypotheses;
use crate::chain::Chain;
use crate::constant::Constant;
use crate::derivation::{
    validate_h3prime, validate_hardy, validate_m, DerivationConfig, DerivationSpec,
};
use crate::elclosure::{render_terms, term_json, Tower, TowerMonomial, TowerSeries};
use crate::error::{Error, Result};
use crate::expr::{eval, Value};
use crate::prelog::{check_hl1, check_hl2_hl3, check_hl4, Prelog};
use crate::report::Report;
use crate::series::{Mono, PrefixStatus, Term};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    H3prime,
    M,
    Hardy,
    Hl,
    Hypotheses,
}

/// Engine settings; the keys double as the config file format.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub chain: String,
    pub step: Option<i64>,
    pub derivation: String,
    pub prelog: String,
    pub budget: usize,
    pub depth: usize,
    pub format: Format,
    /// Base table for `derivation = "explicit"`.
    #[serde(skip_serializing)]
    pub explicit: Option<DerivationConfig>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            chain: "logexp".into(),
            step: None,
            derivation: "logexp-ddx".into(),
            prelog: "sigma".into(),
            budget: 32,
            depth: crate::elclosure::DEFAULT_DEPTH,
            format: Format::Text,
            explicit: None,
        }
    }
}

impl CliConfig {
    pub fn from_toml(src: &str) -> Result<CliConfig> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<CliConfig> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        CliConfig::from_toml(&src)
    }
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Derivative of an expression.
    Derive {
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Logarithmic derivative a′/a.
    Logderiv {
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Asymptotic integral of the leading term.
    Ai {
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Antiderivative by repeated asymptotic integration.
    Integrate {
        /// Number of terms to produce (default: the budget).
        #[arg(long)]
        terms: Option<usize>,
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Logarithm; transcendental constants are kept in a ledger.
    Log {
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Whether the exponential closure is closed under integration.
    Closure,
    /// Run a validator over an index window.
    Validate {
        #[arg(value_enum)]
        check: Check,
        #[arg(long, default_value_t = -8, allow_hyphen_values = true)]
        lo: i64,
        #[arg(long, default_value_t = 8, allow_hyphen_values = true)]
        hi: i64,
    },
    /// Real order and dominance of two germs.
    Compare {
        #[arg(allow_hyphen_values = true)]
        a: String,
        #[arg(allow_hyphen_values = true)]
        b: String,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Derive { .. } => "derive",
            Command::Logderiv { .. } => "logderiv",
            Command::Ai { .. } => "ai",
            Command::Integrate { .. } => "integrate",
            Command::Log { .. } => "log",
            Command::Closure => "closure",
            Command::Validate { .. } => "validate",
            Command::Compare { .. } => "compare",
        }
    }

    pub fn inputs(&self) -> Vec<String> {
        match self {
            Command::Derive { expr }
            | Command::Logderiv { expr }
            | Command::Ai { expr }
            | Command::Integrate { expr, .. }
            | Command::Log { expr } => vec![expr.clone()],
            Command::Closure => vec![],
            Command::Validate { check, .. } => {
                vec![check
                    .to_possible_value()
                    .map(|v| v.get_name().to_string())
                    .unwrap_or_default()]
            }
            Command::Compare { a, b } => vec![a.clone(), b.clone()],
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "transserial",
    version,
    about = "Exp-log germs as generalized series"
)]
pub struct Cli {
    /// Terms to force when rendering a series.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Maximum exponential tower level.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Chain preset: logexp, interleaved or plain.
    #[arg(long, global = true)]
    pub chain: Option<String>,
    /// Chain step for interleaved and plain chains.
    #[arg(long, global = true)]
    pub step: Option<i64>,
    /// Derivation preset: logexp-ddx, interleaved, sigma-geometric or explicit.
    #[arg(long, global = true)]
    pub derivation: Option<String>,
    /// Pre-logarithm: sigma, integrated or basic.
    #[arg(long, global = true)]
    pub prelog: Option<String>,
    /// TOML file with the same keys; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn config(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        if let Some(v) = &self.chain {
            cfg.chain = v.clone();
        }
        if self.step.is_some() {
            cfg.step = self.step;
        }
        if let Some(v) = &self.derivation {
            cfg.derivation = v.clone();
        }
        if let Some(v) = &self.prelog {
            cfg.prelog = v.clone();
        }
        Ok(cfg)
    }
}

/// A command result: text, the JSON `result` object, and whether a check
/// failed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub text: String,
    pub json: Json,
    pub failed: bool,
}

pub struct Engine {
    cfg: CliConfig,
    tower: Tower,
}

impl Engine {
    pub fn new(cfg: CliConfig) -> Result<Engine> {
        if cfg.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        let chain = Chain::from_preset(&cfg.chain, cfg.step)?;
        let spec = match cfg.derivation.as_str() {
            "explicit" => {
                let table = cfg.explicit.as_ref().ok_or_else(|| {
                    Error::Config("derivation `explicit` needs an [explicit] table".into())
                })?;
                DerivationSpec::from_config(chain, table)?
            }
            name => DerivationSpec::from_preset(name, &chain)?,
        };
        let prelog = Prelog::from_preset(&cfg.prelog, &spec)?;
        let tower = Tower::new(&spec, &prelog, cfg.depth);
        Ok(Engine { cfg, tower })
    }

    pub fn config(&self) -> &CliConfig {
        &self.cfg
    }

    pub fn tower(&self) -> &Tower {
        &self.tower
    }

    pub fn eval(&self, src: &str) -> Result<Value> {
        eval(src, &self.tower)
    }

    fn series_only(&self, src: &str) -> Result<TowerSeries> {
        self.eval(src)?.into_series("this command")
    }

    pub fn run(&self, cmd: &Command) -> Result<Outcome> {
        match cmd {
            Command::Derive { expr } => {
                self.series_outcome(&self.tower.derive(&self.series_only(expr)?), None)
            }
            Command::Logderiv { expr } => {
                self.series_outcome(&self.tower.log_derivative(&self.series_only(expr)?)?, None)
            }
            Command::Log { expr } => {
                let a = self.series_only(expr)?;
                let (s, c) = self.tower.log(&a).map_err(|e| match e {
                    Error::NotPositive => Error::NotPositiveLogArg,
                    e => e,
                })?;
                self.series_outcome(&s, Some(&c))
            }
            Command::Ai { expr } => {
                let v = self.tower.ai(&self.series_only(expr)?)?;
                let t = Term::new(v.coeff.clone(), v.mono.clone());
                let text = render_terms(std::slice::from_ref(&t), self.tower.chain(), None);
                let json = json!({
                    "kind": "integral",
                    "text": text,
                    "terms": [term_json(&t)],
                    "psi": v.psi.map(|p| p.get()),
                });
                Ok(Outcome {
                    text,
                    json,
                    failed: false,
                })
            }
            Command::Integrate { expr, terms } => {
                let n = terms.unwrap_or(self.cfg.budget);
                let r = self.tower.integrate(&self.series_only(expr)?, n)?;
                let prefix = r.antiderivative.prefix(n.max(1))?;
                let mut text = render_terms(&prefix.terms, self.tower.chain(), None);
                if !r.exact {
                    text.push_str("  [truncated]");
                }
                let residual = if r.exact {
                    Json::Null
                } else {
                    r.residual.leading().ok().map(|t| term_json(&t)).into()
                };
                let json = json!({
                    "kind": "integration",
                    "text": text,
                    "terms": prefix.terms.iter().map(term_json).collect::<Vec<_>>(),
                    "exact": r.exact,
                    "steps": r.steps,
                    "residual_leading": residual,
                });
                Ok(Outcome {
                    text,
                    json,
                    failed: false,
                })
            }
            Command::Closure => {
                let rep = self.tower.closure_report();
                let text = match rep.checked.get("theta_hat").and_then(|v| v.as_str()) {
                    Some(h) if rep.passed => format!(
                        "not closed under integration: θ̂ = {h} lies in Γ and has no asymptotic integral"
                    ),
                    None => "closed under integration: no θ̂ in Γ".to_string(),
                    Some(_) => rep.summary(),
                };
                Ok(Outcome {
                    text,
                    failed: !rep.passed,
                    json: report_json(&[rep]),
                })
            }
            Command::Validate { check, lo, hi } => {
                if lo > hi {
                    return Err(Error::Config(format!("empty window [{lo}, {hi}]")));
                }
                let reports = self.validate(*check, *lo, *hi);
                let text = reports
                    .iter()
                    .map(Report::summary)
                    .collect::<Vec<_>>()
                    .join("\n");
                let failed = reports.iter().any(|r| !r.passed);
                Ok(Outcome {
                    text,
                    failed,
                    json: report_json(&reports),
                })
            }
            Command::Compare { a, b } => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                let (order, dominance) = compare(&a, &b)?;
                let o = match order {
                    Ordering::Less => "<",
                    Ordering::Equal => "=",
                    Ordering::Greater => ">",
                };
                let d = match dominance {
                    Ordering::Less => "≺",
                    Ordering::Equal => "≍",
                    Ordering::Greater => "≻",
                };
                let text = format!("order: {o}\ndominance: {d}");
                Ok(Outcome {
                    text,
                    failed: false,
                    json: json!({"kind": "comparison", "order": o, "dominance": d}),
                })
            }
        }
    }

    pub fn validate(&self, check: Check, lo: i64, hi: i64) -> Vec<Report> {
        let spec = self.tower.spec();
        match check {
            Check::H3prime => vec![validate_h3prime(spec, lo, hi, 200)],
            Check::M => vec![validate_m(spec, lo, hi, 12)],
            Check::Hardy => vec![validate_hardy(spec, 200, 0x4841_5244)],
            Check::Hypotheses => vec![check_hypotheses(spec, lo, hi)],
            Check::Hl => {
                let p = self.tower.prelog();
                vec![
                    check_hl1(p, lo, hi, 8),
                    check_hl2_hl3(p, lo, hi),
                    check_hl4(p, spec, lo, hi, self.cfg.budget, 5),
                ]
            }
        }
    }

    fn series_outcome(&self, s: &TowerSeries, ledger: Option<&Constant>) -> Result<Outcome> {
        let p = s.prefix(self.cfg.budget)?;
        let mut text = render_terms(&p.terms, self.tower.chain(), ledger);
        let status = match &p.status {
            PrefixStatus::Complete => "complete",
            PrefixStatus::Truncated => {
                text.push_str("  [truncated]");
                "truncated"
            }
            PrefixStatus::Stalled(_) => {
                text.push_str("  [stalled]");
                "stalled"
            }
        };
        let json = json!({
            "kind": "series",
            "text": text,
            "terms": p.terms.iter().map(term_json).collect::<Vec<_>>(),
            "status": status,
            "constant": ledger.filter(|c| !c.is_zero()).map(|c| json!({"text": c.to_string(), "value": c})),
        });
        Ok(Outcome {
            text,
            json,
            failed: false,
        })
    }
}

fn report_json(reports: &[Report]) -> Json {
    json!({
        "kind": "reports",
        "passed": reports.iter().all(|r| r.passed),
        "reports": reports,
    })
}

/// Parts of a germ above 1, at 1 (with the ledger) and below 1.
fn parts(v: &Value) -> Result<(TowerSeries, Constant, TowerSeries)> {
    let (big, c, small) = v.series.split()?;
    Ok((big, Constant::rational(c).add(&v.ledger), small))
}

/// Sign of a germ and its leading monomial (`None` for zero).
fn leading(v: &Value) -> Result<Option<(Ordering, TowerMonomial)>> {
    let (big, c, small) = parts(v)?;
    let sign = |q: &crate::Q| q.cmp(&crate::Q::from_integer(0.into()));
    if !big.is_zero()? {
        let t = big.leading()?;
        return Ok(Some((sign(&t.coeff), t.mono)));
    }
    if !c.is_zero() {
        return Ok(Some((c.cmp_real(&Constant::zero()), TowerMonomial::one())));
    }
    if !small.is_zero()? {
        let t = small.leading()?;
        return Ok(Some((sign(&t.coeff), t.mono)));
    }
    Ok(None)
}

/// Real order `a ? b` and dominance `a ≺/≍/≻ b`.
pub fn compare(a: &Value, b: &Value) -> Result<(Ordering, Ordering)> {
    let d = Value {
        series: a.series.sub(&b.series),
        ledger: a.ledger.sub(&b.ledger),
    };
    let order = leading(&d)?.map_or(Ordering::Equal, |(s, _)| s);
    let dominance = match (leading(a)?, leading(b)?) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some((_, m)), Some((_, n))) => m.cmp(&n),
    };
    Ok((order, dominance))
}

/// Exit status and captured output of one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Exit code for an error: 1 for usage and configuration mistakes, 2 for
/// everything the engine itself refuses.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Syntax { .. } | Error::Config(_) => 1,
        _ => 2,
    }
}

fn config_json(cfg: &CliConfig) -> Json {
    json!({
        "chain": cfg.chain,
        "step": cfg.step,
        "derivation": cfg.derivation,
        "prelog": cfg.prelog,
        "budget": cfg.budget,
        "depth": cfg.depth,
    })
}

fn error_json(e: &Error) -> Json {
    let mut j = json!({"kind": e.kind(), "message": e.to_string()});
    if let Error::Syntax { pos, .. } = e {
        j["position"] = json!(pos);
    }
    j
}

/// Executes an already-parsed command line.
pub fn execute(cli: &Cli) -> Run {
    let format = cli.format.unwrap_or_default();
    let envelope = |cfg: Option<&CliConfig>| {
        json!({
            "command": cli.command.name(),
            "input": cli.command.inputs(),
            "config": cfg.map(config_json).unwrap_or(Json::Null),
        })
    };
    let fail = |e: &Error, cfg: Option<&CliConfig>, format: Format| {
        let code = exit_code(e);
        match format {
            Format::Text => Run {
                code,
                stdout: String::new(),
                stderr: format!("error: {e}\n"),
            },
            Format::Json => {
                let mut j = envelope(cfg);
                j["ok"] = json!(false);
                j["error"] = error_json(e);
                Run {
                    code,
                    stdout: pretty(&j),
                    stderr: String::new(),
                }
            }
        }
    };
    let cfg = match cli.config() {
        Ok(c) => c,
        Err(e) => return fail(&e, None, format),
    };
    let format = cfg.format;
    let outcome = Engine::new(cfg.clone()).and_then(|eng| eng.run(&cli.command));
    match outcome {
        Err(e) => fail(&e, Some(&cfg), format),
        Ok(o) => {
            let code = if o.failed { 2 } else { 0 };
            let stdout = match format {
                Format::Text => format!("{}\n", o.text),
                Format::Json => {
                    let mut j = envelope(Some(&cfg));
                    j["ok"] = json!(true);
                    j["result"] = o.json;
                    pretty(&j)
                }
            };
            Run {
                code,
                stdout,
                stderr: String::new(),
            }
        }
    }
}

fn pretty(j: &Json) -> String {
    let mut s = serde_json::to_string_pretty(j).expect("json");
    s.push('\n');
    s
}

/// Parses arguments (including the program name) and executes them.
pub fn run<I, T>(args: I) -> Run
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Run {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                },
                _ => Run {
                    code: 1,
                    stdout: String::new(),
                    stderr: text,
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go(args: &[&str]) -> Run {
        run(std::iter::once("transserial").chain(args.iter().copied()))
    }

    #[test]
    fn exit_codes() {
        assert_eq!(go(&["derive", "log("]).code, 1);
        assert_eq!(go(&["bogus"]).code, 1);
        assert_eq!(go(&["--chain", "nope", "derive", "x"]).code, 1);
        let r = go(&["ai", "@theta_hat"]);
        assert_eq!(r.code, 2);
        assert_eq!(r.stderr, "error: no asymptotic integral: input ≍ θ̂\n");
        assert_eq!(go(&["derive", "x^2"]).stdout, "2*x\n");
    }

    #[test]
    fn config_file_keys() {
        let cfg = CliConfig::from_toml(
            "chain = \"interleaved\"\nstep = 2\nderivation = \"interleaved\"\nbudget = 8\n",
        )
        .unwrap();
        assert_eq!(cfg.step, Some(2));
        assert_eq!(cfg.prelog, "sigma");
        assert!(Engine::new(cfg).is_ok());
        assert!(CliConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn comparisons() {
        let eng = Engine::new(CliConfig::default()).unwrap();
        let c = |a: &str, b: &str| compare(&eng.eval(a).unwrap(), &eng.eval(b).unwrap()).unwrap();
        assert_eq!(c("x", "log(x)^5"), (Ordering::Greater, Ordering::Greater));
        assert_eq!(
            c("log(3*x)", "log(x) + 1"),
            (Ordering::Greater, Ordering::Equal)
        );
        assert_eq!(
            c("log(3*x) - log(x)", "1"),
            (Ordering::Greater, Ordering::Equal)
        );
        assert_eq!(c("-x", "1/x"), (Ordering::Less, Ordering::Greater));
        assert_eq!(c("x - x", "0"), (Ordering::Equal, Ordering::Equal));
    }
}
