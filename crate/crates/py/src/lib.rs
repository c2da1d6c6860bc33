use std::cmp::Ordering;
use std::collections::BTreeMap;

use pyo3::basic::CompareOp;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use transserial::chain::Chain;
use transserial::cli::{self, Check, CliConfig, Command, Engine as CoreEngine};
use transserial::rational::{fmt_q, parse_q};
use transserial::{Error, Monomial as CoreMonomial, Q};

create_exception!(transserial, TransserialError, PyException);
create_exception!(transserial, ObstructionError, TransserialError);
create_exception!(transserial, ExprSyntaxError, TransserialError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Syntax { .. } => ExprSyntaxError::new_err(e.to_string()),
        e if cli::exit_code(&e) == 2 => ObstructionError::new_err((e.kind(), e.to_string())),
        e => TransserialError::new_err((e.kind(), e.to_string())),
    }
}

fn rational(s: &str) -> PyResult<Q> {
    parse_q(s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn ord_int(o: Ordering) -> i8 {
    o as i8
}

/// A monomial of the chain group, as a window of exponents plus an
/// optional periodic tail.
#[pyclass(module = "transserial", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Monomial {
    inner: CoreMonomial,
}

#[pymethods]
impl Monomial {
    /// `Monomial({0: "2", -1: "-1"})` is `x^2*log(x)^-1`.
    #[new]
    #[pyo3(signature = (exponents = BTreeMap::new()))]
    fn new(exponents: BTreeMap<i64, String>) -> PyResult<Self> {
        let mut es = Vec::new();
        for (i, e) in exponents {
            es.push((i, rational(&e)?));
        }
        Ok(Monomial {
            inner: CoreMonomial::from_exponents(es),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (i, exponent = "1"))]
    fn phi(i: i64, exponent: &str) -> PyResult<Self> {
        Ok(Monomial {
            inner: CoreMonomial::phi_pow(i, rational(exponent)?),
        })
    }

    /// `Π_{j ≤ top} φ_j^{pattern[(top − j) mod len]}`.
    #[staticmethod]
    fn tail_product(top: i64, pattern: Vec<String>) -> PyResult<Self> {
        let p = pattern
            .iter()
            .map(|s| rational(s))
            .collect::<PyResult<Vec<_>>>()?;
        if p.is_empty() {
            return Err(PyValueError::new_err("empty pattern"));
        }
        Ok(Monomial {
            inner: CoreMonomial::tail_product(top, p),
        })
    }

    fn exponent(&self, j: i64) -> String {
        fmt_q(&self.inner.exponent(j))
    }

    fn leading_fundamental(&self) -> Option<i64> {
        self.inner.lf()
    }

    fn is_one(&self) -> bool {
        self.inner.is_one()
    }

    #[pyo3(signature = (chain = "logexp", step = None))]
    fn render(&self, chain: &str, step: Option<i64>) -> PyResult<String> {
        let c = Chain::from_preset(chain, step).map_err(to_py)?;
        Ok(self.inner.render(&c))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("json")
    }

    fn __mul__(&self, other: &Monomial) -> Monomial {
        Monomial {
            inner: self.inner.mul(&other.inner),
        }
    }

    fn __truediv__(&self, other: &Monomial) -> Monomial {
        Monomial {
            inner: self.inner.div(&other.inner),
        }
    }

    fn __pow__(
        &self,
        e: &Bound<'_, PyAny>,
        _modulo: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Monomial> {
        let e = match e.extract::<i64>() {
            Ok(k) => Q::from_integer(k.into()),
            Err(_) => rational(&e.extract::<String>()?)?,
        };
        Ok(Monomial {
            inner: self.inner.pow(&e),
        })
    }

    /// Asymptotic order: `a < b` means `a ≺ b`.
    fn __richcmp__(&self, other: &Monomial, op: CompareOp) -> bool {
        op.matches(self.inner.cmp(&other.inner))
    }

    fn __hash__(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.inner.hash(&mut h);
        h.finish()
    }

    fn __repr__(&self) -> String {
        format!("Monomial({})", self.inner.render(&Chain::logexp()))
    }
}

/// A configured engine: chain, derivation, pre-logarithm and tower depth.
#[pyclass(module = "transserial", frozen)]
struct Engine {
    inner: CoreEngine,
}

impl Engine {
    fn text(&self, cmd: Command) -> PyResult<String> {
        Ok(self.inner.run(&cmd).map_err(to_py)?.text)
    }
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (chain = "logexp", derivation = "logexp-ddx", prelog = "sigma", budget = 32, depth = 3, step = None))]
    fn new(
        chain: &str,
        derivation: &str,
        prelog: &str,
        budget: usize,
        depth: usize,
        step: Option<i64>,
    ) -> PyResult<Self> {
        let cfg = CliConfig {
            chain: chain.into(),
            step,
            derivation: derivation.into(),
            prelog: prelog.into(),
            budget,
            depth,
            ..CliConfig::default()
        };
        Ok(Engine {
            inner: CoreEngine::new(cfg).map_err(to_py)?,
        })
    }

    /// Engine from TOML config text with the CLI's keys.
    #[staticmethod]
    fn from_toml(src: &str) -> PyResult<Self> {
        let cfg = CliConfig::from_toml(src).map_err(to_py)?;
        Ok(Engine {
            inner: CoreEngine::new(cfg).map_err(to_py)?,
        })
    }

    fn derive(&self, expr: String) -> PyResult<String> {
        self.text(Command::Derive { expr })
    }

    fn logderiv(&self, expr: String) -> PyResult<String> {
        self.text(Command::Logderiv { expr })
    }

    fn ai(&self, expr: String) -> PyResult<String> {
        self.text(Command::Ai { expr })
    }

    #[pyo3(signature = (expr, terms = None))]
    fn integrate(&self, expr: String, terms: Option<usize>) -> PyResult<String> {
        self.text(Command::Integrate { expr, terms })
    }

    fn log(&self, expr: String) -> PyResult<String> {
        self.text(Command::Log { expr })
    }

    fn closure(&self) -> PyResult<String> {
        self.text(Command::Closure)
    }

    /// Returns `(order, dominance)`, each −1, 0 or 1.
    fn compare(&self, a: &str, b: &str) -> PyResult<(i8, i8)> {
        let a = self.inner.eval(a).map_err(to_py)?;
        let b = self.inner.eval(b).map_err(to_py)?;
        let (o, d) = cli::compare(&a, &b).map_err(to_py)?;
        Ok((ord_int(o), ord_int(d)))
    }

    /// Runs a validator; returns `(passed, report_json)`.
    #[pyo3(signature = (check, lo = -8, hi = 8))]
    fn validate(&self, check: &str, lo: i64, hi: i64) -> PyResult<(bool, String)> {
        let check = match check {
            "h3prime" => Check::H3prime,
            "m" => Check::M,
            "hardy" => Check::Hardy,
            "hl" => Check::Hl,
            "hypotheses" => Check::Hypotheses,
            other => return Err(PyValueError::new_err(format!("unknown check {other:?}"))),
        };
        let reports = self.inner.validate(check, lo, hi);
        let passed = reports.iter().all(|r| r.passed);
        Ok((passed, serde_json::to_string(&reports).expect("json")))
    }

    /// The result object a `--format json` run would contain.
    fn json(&self, command: &str, args: Vec<String>) -> PyResult<String> {
        let mut argv = vec!["transserial".to_string(), command.to_string()];
        argv.extend(args);
        let cli = <cli::Cli as clap::Parser>::try_parse_from(&argv)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let out = self.inner.run(&cli.command).map_err(to_py)?;
        Ok(out.json.to_string())
    }
}

/// Runs a full command line; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run(args: Vec<String>) -> (i32, String, String) {
    let r = cli::run(std::iter::once("transserial".to_string()).chain(args));
    (r.code, r.stdout, r.stderr)
}

#[pymodule(name = "transserial")]
fn transserial_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Monomial>()?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("TransserialError", py.get_type::<TransserialError>())?;
    m.add("ObstructionError", py.get_type::<ObstructionError>())?;
    m.add("ExprSyntaxError", py.get_type::<ExprSyntaxError>())?;
    Ok(())
}
