//! Flat `key = value` experiment configuration.
//!
//! A config file holds global keys (`seed`, `format`, `out`) before any
//! section header, then one `[subcommand]` section per subcommand. Command
//! line flags override file values, which override the built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use critlab::{Error, Result};

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub default_format: Format,
    pub keys: &'static [Key],
}

pub const GLOBAL_KEYS: &[&str] = &["seed", "format", "out"];

pub const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "field",
        about: "Sample a Poisson point field in a centered cube",
        default_format: Format::Csv,
        keys: &[key("half_width", "5", "Half side of the sampling window"), key("intensity", "1", "Points per unit volume")],
    },
    Subcommand {
        name: "potential",
        about: "Evaluate the truncated or renormalized potential along the x axis",
        default_format: Format::Csv,
        keys: &[
            key("kind", "renormalized", "truncated, renormalized or singular"),
            key("a", "1", "Truncation radius of the kernel"),
            key("epsilon", "1", "Field intensity"),
            key("tail", "drop", "Far-field policy: drop or gaussian"),
            key("x_min", "-1", "First evaluation point"),
            key("x_max", "1", "Last evaluation point"),
            key("n_points", "11", "Number of evaluation points"),
        ],
    },
    Subcommand {
        name: "fk",
        about: "Quenched Feynman-Kac moment with an optional cap sweep",
        default_format: Format::Csv,
        keys: &[
            key("theta", "0.1", "Coupling"),
            key("t", "0.5", "Time horizon"),
            key("dt", "1e-3", "Step width"),
            key("cap", "1e4", "Clamp on theta V"),
            key("caps", "", "Comma list of clamps to sweep (default: cap)"),
            key("replicates", "10000", "Number of paths"),
            key("start", "0,0,0", "Starting point x,y,z"),
            key("a", "1", "Truncation radius of the kernel"),
            key("epsilon", "1", "Field intensity"),
            key("domain", "none", "none, ball:R or box:R"),
            key("exit_rule", "grid", "grid or bridge"),
            key("field", "planted:1", "poisson or planted:m"),
        ],
    },
    Subcommand {
        name: "eigen",
        about: "Principal Dirichlet eigenvalue of the clamped field on a box",
        default_format: Format::Csv,
        keys: &[
            key("theta", "0.1", "Coupling"),
            key("radius", "1", "Half side of the box"),
            key("grid_n", "31", "Interior nodes per axis"),
            key("clamps", "1e4", "Comma list of clamps"),
            key("a", "1", "Truncation radius of the kernel"),
            key("epsilon", "1", "Field intensity"),
            key("field", "planted:1", "poisson or planted:m"),
        ],
    },
    Subcommand {
        name: "hardy",
        about: "Hardy ratios of the g_M family or the regularized H functional",
        default_format: Format::Csv,
        keys: &[
            key("gm_sweep", "", "Comma list of M values, e.g. M=e10,e50 (eX means e^X)"),
            key("gm_grid", "100000", "Radial grid size for g_M"),
            key("theta", "0.1", "Comma list of couplings for H"),
            key("r", "1", "Comma list of support radii for H"),
            key("delta", "0.01", "Comma list of regularizations for H"),
            key("h_grid", "4000", "Interior nodes of the H discretization"),
        ],
    },
    Subcommand {
        name: "rates",
        about: "Scaling exponents and integral-test verdict for theta and l(t)",
        default_format: Format::Json,
        keys: &[
            key("theta", "0.05", "Coupling"),
            key("l", "const:1", "const:c, logpow:a, loglogpow:a or logxloglogpow:a"),
            key("side", "limsup", "limsup or liminf"),
        ],
    },
    Subcommand {
        name: "extremes",
        about: "Probability that some lattice ball holds three points, per level",
        default_format: Format::Csv,
        keys: &[
            key("n_min", "2", "First level"),
            key("n_max", "6", "Last level"),
            key("delta", "1.8", "Ball radius at level 0"),
            key("r", "5.236", "Half lattice spacing at level 0"),
            key("replicates", "100000", "Replicates per level"),
        ],
    },
    Subcommand {
        name: "association",
        about: "Joint exceedance of box counts against the product of marginals",
        default_format: Format::Csv,
        keys: &[
            key("half_width", "2", "Half side of the sampling window"),
            key("intensity", "1", "Points per unit volume"),
            key("cells", "-1,-0.5,-0.5,0,0.5,0.5;-0.5,-0.5,-0.5,0.5,0.5,0.5", "Boxes lo_x,lo_y,lo_z,hi_x,hi_y,hi_z separated by ;"),
            key("thresholds", "2,2", "Comma list, one per box"),
            key("direction", "ge", "ge (at least) or le (at most)"),
            key("replicates", "100000", "Number of fields"),
        ],
    },
    Subcommand {
        name: "exit-check",
        about: "Monte Carlo check of the Brownian exit lower bound",
        default_format: Format::Csv,
        keys: &[
            key("r", "1", "Ball radius R"),
            key("t", "1", "Time horizon"),
            key("dt", "1e-3", "Step width"),
            key("target", "0,0,0,1,1,1", "Target box lo_x,lo_y,lo_z,hi_x,hi_y,hi_z"),
            key("replicates", "100000", "Number of paths per factor"),
        ],
    },
];

pub fn subcommand(name: &str) -> Option<&'static Subcommand> {
    SUBCOMMANDS.iter().find(|s| s.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("format: expected csv or json, got '{s}'"))),
        }
    }
}

/// Keys of one config file, grouped by section; `""` is the global section.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ConfigFile::default();
        let mut section = String::new();
        out.sections.insert(section.clone(), BTreeMap::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| Error::Config(format!("config line {}: {msg}", i + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if subcommand(name).is_none() {
                    return Err(at(format!("unknown section '{name}'")));
                }
                section = name.to_string();
                out.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let known = if section.is_empty() {
                GLOBAL_KEYS.contains(&k)
            } else {
                subcommand(&section).map_or(false, |s| s.keys.iter().any(|key| key.name == k))
            };
            if !known {
                let scope = if section.is_empty() { "global".to_string() } else { format!("[{section}]") };
                return Err(at(format!("unknown key '{k}' in {scope} section")));
            }
            out.sections.get_mut(&section).expect("section inserted").insert(k.to_string(), v.to_string());
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn global(&self, k: &str) -> Option<&str> {
        self.sections.get("").and_then(|s| s.get(k)).map(String::as_str)
    }

    pub fn get(&self, section: &str, k: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(k)).map(String::as_str)
    }
}

/// The resolved parameters of one run, in declaration order.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub subcommand: &'static str,
    pub params: Vec<(&'static str, String)>,
    pub seed: u64,
    pub format: Format,
    pub out: Option<String>,
}

impl ExperimentConfig {
    fn raw(&self, k: &str) -> &str {
        self.params.iter().find(|(n, _)| *n == k).map(|(_, v)| v.as_str()).expect("key declared for subcommand")
    }

    pub fn str(&self, k: &str) -> &str {
        self.raw(k)
    }

    pub fn f64(&self, k: &str) -> Result<f64> {
        parse_f64(k, self.raw(k))
    }

    pub fn u64(&self, k: &str) -> Result<u64> {
        parse_u64(k, self.raw(k))
    }

    pub fn f64_list(&self, k: &str) -> Result<Vec<f64>> {
        split_list(self.raw(k), ',').map(|s| parse_f64(k, s)).collect()
    }

    pub fn vec3(&self, k: &str) -> Result<[f64; 3]> {
        let v = self.f64_list(k)?;
        v.try_into().map_err(|_| bad(k, self.raw(k), "three comma separated numbers"))
    }
}

fn split_list(s: &str, sep: char) -> impl Iterator<Item = &str> {
    s.split(sep).map(str::trim).filter(|x| !x.is_empty())
}

pub fn bad(k: &str, v: &str, want: &str) -> Error {
    Error::Config(format!("{k}: expected {want}, got '{v}'"))
}

pub fn parse_f64(k: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| bad(k, v, "a number"))
}

/// Integers may be written in float notation such as `1e5`.
pub fn parse_u64(k: &str, v: &str) -> Result<u64> {
    let v = v.trim();
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) => Ok(x as u64),
        _ => Err(bad(k, v, "a non-negative integer")),
    }
}

pub fn boxes(k: &str, v: &str) -> Result<Vec<[f64; 6]>> {
    split_list(v, ';')
        .map(|b| {
            let xs: Vec<f64> = split_list(b, ',').map(|s| parse_f64(k, s)).collect::<Result<_>>()?;
            xs.try_into().map_err(|_| bad(k, b, "six comma separated numbers per box"))
        })
        .collect()
}

/// Merge defaults, the config file section and flag values.
pub fn resolve(
    sub: &'static Subcommand,
    file: Option<&ConfigFile>,
    flags: &BTreeMap<String, String>,
    seed_flag: Option<&str>,
    format_flag: Option<&str>,
    out_flag: Option<&str>,
) -> Result<ExperimentConfig> {
    let params = sub
        .keys
        .iter()
        .map(|k| {
            let v = flags
                .get(k.name)
                .map(String::as_str)
                .or_else(|| file.and_then(|f| f.get(sub.name, k.name)))
                .unwrap_or(k.default);
            (k.name, v.to_string())
        })
        .collect();
    let global = |flag: Option<&str>, k: &str| flag.map(str::to_string).or_else(|| file.and_then(|f| f.global(k)).map(str::to_string));
    let seed = match global(seed_flag, "seed") {
        Some(s) => parse_u64("seed", &s)?,
        None => 1,
    };
    let format = match global(format_flag, "format") {
        Some(s) => Format::parse(&s)?,
        None => sub.default_format,
    };
    Ok(ExperimentConfig { subcommand: sub.name, params, seed, format, out: global(out_flag, "out") })
}
