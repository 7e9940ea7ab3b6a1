//! INI problem configuration: parsing, schema validation, defaults and
//! canonical re-serialization.

use std::collections::BTreeSet;

use ini::{Ini, ParseOption};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::solver::SearchPlan;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { a: f64, b: f64, n: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
}

impl DomainSpec {
    pub fn measure(&self) -> f64 {
        match *self {
            DomainSpec::Interval { a, b, .. } => b - a,
            DomainSpec::Rectangle { lx, ly, .. } => lx * ly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Constant { value: f64 },
    /// Nodal values from a CSV file (`index,value`).
    Nodal { file: String },
    /// `offset + amplitude · Π cos(π (x_i − x_i,0) / L_i)`.
    Cosine { offset: f64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Constant { value: f64 },
    /// Per-side constants. In 1D only `left` and `right` are used.
    Sides { left: f64, right: f64, bottom: f64, top: f64 },
    Nodal { file: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlopeSpec {
    Value { slope: f64 },
    /// The `k`-th distinct eigenvalue.
    Eigen { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionSpec {
    Model {
        m: usize,
        l: usize,
        /// `a_s` as a fraction of `λ̂_{m+1} − λ̂_m`.
        softening_fraction: f64,
        delta: f64,
    },
    Linear { m: usize, l: usize, slope: SlopeSpec, delta: f64 },
    Square { m: usize, l: usize, growth: f64, delta: f64 },
}

impl ReactionSpec {
    pub fn indices(&self) -> (usize, usize) {
        match *self {
            ReactionSpec::Model { m, l, .. } | ReactionSpec::Linear { m, l, .. } | ReactionSpec::Square { m, l, .. } => {
                (m, l)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSpec {
    pub cluster_tol: f64,
    pub dense_limit: usize,
    /// Pairs written by the `spectrum` subcommand; 0 means all.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSpec {
    pub seed: u64,
    pub plan: SearchPlan,
    pub tau_max_iter: usize,
    pub tau_grad_tol: f64,
    pub probe_directions: usize,
    pub probe_radii: Vec<f64>,
    pub certificate_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: String,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub schema_version: u32,
    pub domain: DomainSpec,
    pub potential: PotentialSpec,
    pub boundary: BoundarySpec,
    pub reaction: ReactionSpec,
    pub spectrum: SpectrumSpec,
    pub solver: SolverSpec,
    pub output: OutputSpec,
}

struct Section<'a> {
    name: &'static str,
    props: Option<&'a ini::Properties>,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn raw(&mut self, key: &'static str) -> Result<Option<&'a str>> {
        self.used.insert(key);
        let Some(p) = self.props else { return Ok(None) };
        let mut all = p.get_all(key);
        let first = all.next();
        if all.next().is_some() {
            return Err(Error::schema(self.qualify(key), "duplicate key"));
        }
        Ok(first.map(str::trim))
    }

    fn qualify(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn str_or(&mut self, key: &'static str, default: &str) -> Result<String> {
        Ok(self.raw(key)?.unwrap_or(default).to_string())
    }

    fn required_str(&mut self, key: &'static str) -> Result<String> {
        self.raw(key)?
            .map(str::to_string)
            .ok_or_else(|| Error::schema(self.qualify(key), "required key is missing"))
    }

    fn f64_opt(&mut self, key: &'static str) -> Result<Option<f64>> {
        match self.raw(key)? {
            None => Ok(None),
            Some(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::schema(self.qualify(key), format!("not a number: {s:?}")))?;
                if !v.is_finite() {
                    return Err(Error::schema(self.qualify(key), "must be finite"));
                }
                Ok(Some(v))
            }
        }
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn required_f64(&mut self, key: &'static str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| Error::schema(self.qualify(key), "required key is missing"))
    }

    fn usize_opt(&mut self, key: &'static str) -> Result<Option<usize>> {
        match self.raw(key)? {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::schema(self.qualify(key), format!("not a non-negative integer: {s:?}"))),
        }
    }

    fn usize_or(&mut self, key: &'static str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn required_usize(&mut self, key: &'static str) -> Result<usize> {
        self.usize_opt(key)?
            .ok_or_else(|| Error::schema(self.qualify(key), "required key is missing"))
    }

    fn positive(&self, key: &'static str, v: f64) -> Result<f64> {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::schema(self.qualify(key), format!("must be positive, got {v}")))
        }
    }

    fn finish(self) -> Result<()> {
        let Some(p) = self.props else { return Ok(()) };
        for (k, _) in p.iter() {
            if !self.used.contains(k) {
                return Err(Error::schema(k.to_string(), format!("unknown key in [{}]", self.name)));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 8] = ["meta", "domain", "potential", "boundary", "reaction", "spectrum", "solver", "output"];

/// Line-level syntax check so malformed lines are reported where they occur.
fn prescan(text: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with(';') || t.starts_with('#') {
            continue;
        }
        let bad = if t.starts_with('[') {
            !(t.ends_with(']') && t.len() > 2 && !t[1..t.len() - 1].contains(['[', ']']))
        } else {
            !t.contains('=') || t.starts_with('=')
        };
        if bad {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("malformed line: {t:?}"),
            });
        }
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let opt = ParseOption {
        enabled_quote: true,
        enabled_escape: false,
        enabled_indented_mutiline_value: false,
        enabled_preserve_key_leading_whitespace: false,
    };
    prescan(text)?;
    let doc = Ini::load_from_str_opt(text, opt).map_err(|e| Error::Parse {
        line: e.line,
        msg: e.msg.to_string(),
    })?;
    if let Some((k, _)) = doc.general_section().iter().next() {
        return Err(Error::schema(k.to_string(), "key outside of any section"));
    }
    for name in doc.sections().flatten() {
        if !SECTIONS.contains(&name) {
            return Err(Error::schema(name.to_string(), "unknown section"));
        }
        if doc.section_all(Some(name)).count() > 1 {
            return Err(Error::schema(name.to_string(), "duplicate section"));
        }
    }
    let sec = |name: &'static str| Section {
        name,
        props: doc.section(Some(name)),
        used: BTreeSet::new(),
    };

    let mut meta = sec("meta");
    let version = meta.usize_or("schema_version", SCHEMA_VERSION as usize)?;
    if version != SCHEMA_VERSION as usize {
        return Err(Error::schema(
            "meta.schema_version",
            format!("unsupported version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    meta.finish()?;

    let mut d = sec("domain");
    if d.props.is_none() {
        return Err(Error::schema("domain", "required section is missing"));
    }
    let domain = match d.required_str("kind")?.as_str() {
        "interval" => {
            let a = d.f64_or("a", 0.0)?;
            let b = d.required_f64("b")?;
            let n = d.required_usize("n")?;
            if !(a < b) {
                return Err(Error::schema("domain.b", "need a < b"));
            }
            if n < 3 {
                return Err(Error::schema("domain.n", "need at least 3 nodes"));
            }
            DomainSpec::Interval { a, b, n }
        }
        "rectangle" => {
            let lx = d.required_f64("lx")?;
            let ly = d.required_f64("ly")?;
            d.positive("lx", lx)?;
            d.positive("ly", ly)?;
            let nx = d.required_usize("nx")?;
            let ny = d.required_usize("ny")?;
            if nx < 2 || ny < 2 {
                return Err(Error::schema("domain.nx", "need at least 2 nodes per direction"));
            }
            DomainSpec::Rectangle { lx, ly, nx, ny }
        }
        other => return Err(Error::schema("domain.kind", format!("unknown domain kind {other:?}"))),
    };
    d.finish()?;

    let mut p = sec("potential");
    let potential = match p.str_or("kind", "constant")?.as_str() {
        "constant" => PotentialSpec::Constant {
            value: p.f64_or("value", 0.0)?,
        },
        "nodal" => PotentialSpec::Nodal {
            file: p.required_str("file")?,
        },
        "cosine" => PotentialSpec::Cosine {
            offset: p.f64_or("offset", 0.0)?,
            amplitude: p.required_f64("amplitude")?,
        },
        other => return Err(Error::schema("potential.kind", format!("unknown potential kind {other:?}"))),
    };
    p.finish()?;

    let mut b = sec("boundary");
    let boundary = match b.str_or("kind", "constant")?.as_str() {
        "constant" => BoundarySpec::Constant {
            value: b.f64_or("value", 0.0)?,
        },
        "sides" => BoundarySpec::Sides {
            left: b.f64_or("left", 0.0)?,
            right: b.f64_or("right", 0.0)?,
            bottom: b.f64_or("bottom", 0.0)?,
            top: b.f64_or("top", 0.0)?,
        },
        "nodal" => BoundarySpec::Nodal {
            file: b.required_str("file")?,
        },
        other => return Err(Error::schema("boundary.kind", format!("unknown boundary kind {other:?}"))),
    };
    let nonneg = match &boundary {
        BoundarySpec::Constant { value } => vec![("value", *value)],
        BoundarySpec::Sides { left, right, bottom, top } => {
            vec![("left", *left), ("right", *right), ("bottom", *bottom), ("top", *top)]
        }
        BoundarySpec::Nodal { .. } => vec![],
    };
    for (k, v) in nonneg {
        if v < 0.0 {
            return Err(Error::schema(b.qualify(k), "boundary coefficient must be nonnegative"));
        }
    }
    b.finish()?;

    let mut r = sec("reaction");
    if r.props.is_none() {
        return Err(Error::schema("reaction", "required section is missing"));
    }
    let kind = r.str_or("kind", "model")?;
    let m = r.required_usize("m")?;
    let l = r.required_usize("l")?;
    if m < 1 {
        return Err(Error::schema("reaction.m", "m must be at least 1"));
    }
    if l < m + 2 {
        return Err(Error::schema(
            "reaction.l",
            format!("H(f)(iv) requires l >= m+2, got m = {m}, l = {l}"),
        ));
    }
    let delta = r.f64_or("delta", 0.1)?;
    r.positive("delta", delta)?;
    let reaction = match kind.as_str() {
        "model" => {
            let softening_fraction = r.f64_or("softening_fraction", 0.3)?;
            if !(softening_fraction > 0.0 && softening_fraction < 1.0) {
                return Err(Error::schema(
                    "reaction.softening_fraction",
                    "H(f)(ii) requires a fraction in (0, 1)",
                ));
            }
            ReactionSpec::Model {
                m,
                l,
                softening_fraction,
                delta,
            }
        }
        "linear" => {
            let slope = match (r.f64_opt("slope")?, r.usize_opt("slope_eigen")?) {
                (Some(s), None) => SlopeSpec::Value { slope: s },
                (None, Some(k)) if k >= 1 => SlopeSpec::Eigen { k },
                (None, Some(_)) => return Err(Error::schema("reaction.slope_eigen", "index starts at 1")),
                _ => {
                    return Err(Error::schema(
                        "reaction.slope",
                        "give exactly one of slope or slope_eigen",
                    ))
                }
            };
            ReactionSpec::Linear { m, l, slope, delta }
        }
        "square" => ReactionSpec::Square {
            m,
            l,
            growth: r.f64_or("growth", 1.0)?,
            delta,
        },
        other => return Err(Error::schema("reaction.kind", format!("unknown reaction kind {other:?}"))),
    };
    r.finish()?;

    let mut s = sec("spectrum");
    let spectrum = SpectrumSpec {
        cluster_tol: s.f64_or("cluster_tol", 1e-6)?,
        dense_limit: s.usize_or("dense_limit", 2000)?,
        count: s.usize_or("count", 0)?,
    };
    s.positive("cluster_tol", spectrum.cluster_tol)?;
    s.finish()?;

    let mut v = sec("solver");
    let defaults = SearchPlan::with_domain_measure(domain.measure());
    let plan = SearchPlan {
        rho: v.f64_or("rho", defaults.rho)?,
        w_starts: v.usize_or("w_starts", defaults.w_starts)?,
        random_starts: v.usize_or("random_starts", defaults.random_starts)?,
        zero_starts: v.usize_or("zero_starts", defaults.zero_starts)?,
        mp_nodes: v.usize_or("mp_nodes", defaults.mp_nodes)?,
        mp_max_iter: v.usize_or("mp_max_iter", defaults.mp_max_iter)?,
        d_min: v.f64_or("d_min", defaults.d_min)?,
        deflation_radius: v.f64_or("deflation_radius", defaults.deflation_radius)?,
        deflation_max_iter: v.usize_or("deflation_max_iter", defaults.deflation_max_iter)?,
        descent_max_iter: v.usize_or("descent_max_iter", defaults.descent_max_iter)?,
        tol: v.f64_or("tol", defaults.tol)?,
        tol_res: v.f64_or("tol_res", defaults.tol_res)?,
        tol_sign: v.f64_or("tol_sign", defaults.tol_sign)?,
        linking_samples: v.usize_or("linking_samples", defaults.linking_samples)?,
    };
    plan.validate().map_err(|e| match e {
        Error::Schema { key, msg } => Error::Schema {
            key: format!("solver.{key}"),
            msg,
        },
        e => e,
    })?;
    let probe_radii = match v.raw("probe_radii")? {
        None => vec![1.0, 10.0, 50.0],
        Some("") => vec![],
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::schema("solver.probe_radii", "comma-separated numbers expected"))?,
    };
    if probe_radii.iter().any(|x| !(x.is_finite() && *x > 0.0)) || probe_radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::schema("solver.probe_radii", "radii must be positive and increasing"));
    }
    let solver = SolverSpec {
        seed: v.raw("seed")?.map_or(Ok(0), |s| {
            s.parse::<u64>()
                .map_err(|_| Error::schema("solver.seed", format!("not an unsigned integer: {s:?}")))
        })?,
        plan,
        tau_max_iter: v.usize_or("tau_max_iter", 100)?,
        tau_grad_tol: v.f64_or("tau_grad_tol", 1e-10)?,
        probe_directions: v.usize_or("probe_directions", 32)?,
        probe_radii,
        certificate_samples: v.usize_or("certificate_samples", 1000)?,
    };
    v.positive("tau_grad_tol", solver.tau_grad_tol)?;
    v.finish()?;

    let mut o = sec("output");
    let output = OutputSpec {
        dir: o.str_or("dir", ".")?,
        prefix: o.str_or("prefix", "run")?,
    };
    if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
        return Err(Error::schema("output.prefix", "must be a plain non-empty file name prefix"));
    }
    o.finish()?;

    Ok(ProblemConfig {
        schema_version: SCHEMA_VERSION,
        domain,
        potential,
        boundary,
        reaction,
        spectrum,
        solver,
        output,
    })
}

impl ProblemConfig {
    /// Canonical INI text with every default written out.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        let f = |x: f64| fmt_f64(x);
        let q = |t: &str| format!("\"{t}\"");
        kv("[meta]", String::new());
        kv("schema_version", self.schema_version.to_string());
        kv("\n[domain]", String::new());
        match &self.domain {
            DomainSpec::Interval { a, b, n } => {
                kv("kind", "interval".into());
                kv("a", f(*a));
                kv("b", f(*b));
                kv("n", n.to_string());
            }
            DomainSpec::Rectangle { lx, ly, nx, ny } => {
                kv("kind", "rectangle".into());
                kv("lx", f(*lx));
                kv("ly", f(*ly));
                kv("nx", nx.to_string());
                kv("ny", ny.to_string());
            }
        }
        kv("\n[potential]", String::new());
        match &self.potential {
            PotentialSpec::Constant { value } => {
                kv("kind", "constant".into());
                kv("value", f(*value));
            }
            PotentialSpec::Nodal { file } => {
                kv("kind", "nodal".into());
                kv("file", q(file));
            }
            PotentialSpec::Cosine { offset, amplitude } => {
                kv("kind", "cosine".into());
                kv("offset", f(*offset));
                kv("amplitude", f(*amplitude));
            }
        }
        kv("\n[boundary]", String::new());
        match &self.boundary {
            BoundarySpec::Constant { value } => {
                kv("kind", "constant".into());
                kv("value", f(*value));
            }
            BoundarySpec::Sides { left, right, bottom, top } => {
                kv("kind", "sides".into());
                kv("left", f(*left));
                kv("right", f(*right));
                kv("bottom", f(*bottom));
                kv("top", f(*top));
            }
            BoundarySpec::Nodal { file } => {
                kv("kind", "nodal".into());
                kv("file", q(file));
            }
        }
        kv("\n[reaction]", String::new());
        let (m, l) = self.reaction.indices();
        match &self.reaction {
            ReactionSpec::Model {
                softening_fraction,
                delta,
                ..
            } => {
                kv("kind", "model".into());
                kv("m", m.to_string());
                kv("l", l.to_string());
                kv("softening_fraction", f(*softening_fraction));
                kv("delta", f(*delta));
            }
            ReactionSpec::Linear { slope, delta, .. } => {
                kv("kind", "linear".into());
                kv("m", m.to_string());
                kv("l", l.to_string());
                match slope {
                    SlopeSpec::Value { slope } => kv("slope", f(*slope)),
                    SlopeSpec::Eigen { k } => kv("slope_eigen", k.to_string()),
                }
                kv("delta", f(*delta));
            }
            ReactionSpec::Square { growth, delta, .. } => {
                kv("kind", "square".into());
                kv("m", m.to_string());
                kv("l", l.to_string());
                kv("growth", f(*growth));
                kv("delta", f(*delta));
            }
        }
        kv("\n[spectrum]", String::new());
        kv("cluster_tol", f(self.spectrum.cluster_tol));
        kv("dense_limit", self.spectrum.dense_limit.to_string());
        kv("count", self.spectrum.count.to_string());
        kv("\n[solver]", String::new());
        let sv = &self.solver;
        let p = &sv.plan;
        kv("seed", sv.seed.to_string());
        kv("rho", f(p.rho));
        kv("w_starts", p.w_starts.to_string());
        kv("random_starts", p.random_starts.to_string());
        kv("zero_starts", p.zero_starts.to_string());
        kv("mp_nodes", p.mp_nodes.to_string());
        kv("mp_max_iter", p.mp_max_iter.to_string());
        kv("d_min", f(p.d_min));
        kv("deflation_radius", f(p.deflation_radius));
        kv("deflation_max_iter", p.deflation_max_iter.to_string());
        kv("descent_max_iter", p.descent_max_iter.to_string());
        kv("tol", f(p.tol));
        kv("tol_res", f(p.tol_res));
        kv("tol_sign", f(p.tol_sign));
        kv("linking_samples", p.linking_samples.to_string());
        kv("tau_max_iter", sv.tau_max_iter.to_string());
        kv("tau_grad_tol", f(sv.tau_grad_tol));
        kv("probe_directions", sv.probe_directions.to_string());
        kv(
            "probe_radii",
            sv.probe_radii.iter().map(|x| f(*x)).collect::<Vec<_>>().join(", "),
        );
        kv("certificate_samples", sv.certificate_samples.to_string());
        kv("\n[output]", String::new());
        kv("dir", q(&self.output.dir));
        kv("prefix", q(&self.output.prefix));
        s.replace(" = \n", "\n")
    }
}
