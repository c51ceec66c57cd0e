//! On-disk formats: hyper records, training logs, eval reports, fixtures.
//!
//! Reals are written with `{:.16e}` so every file parses back to the same
//! bits. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use trustbayes::eval::{EvalReport, FixtureRow};
use trustbayes::gp::format_real;
use trustbayes::train::{Certification, TrainLog};
use trustbayes::{Error, HyperParams, Interval};

pub const LOG_HEADER: [&str; 11] = [
    "step",
    "nmll",
    "smoothed_prior_incl",
    "smoothed_post_incl",
    "exact_prior_incl",
    "exact_post_incl",
    "p1_star",
    "p2_star",
    "theta",
    "phi1",
    "phi2",
];

pub const FIXTURE_HEADER: [&str; 11] = [
    "func_id",
    "x",
    "f",
    "a_prior_lo",
    "a_prior_hi",
    "a_post_lo",
    "a_post_hi",
    "b_prior_lo",
    "b_prior_hi",
    "b_post_lo",
    "b_post_hi",
];

pub const REPORT_HEADER: [&str; 9] = [
    "method",
    "prior_inclusion",
    "posterior_inclusion",
    "mse",
    "eval_split_prior_inclusion",
    "eval_split_posterior_inclusion",
    "theta",
    "phi1",
    "phi2",
];

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperRecord {
    pub method: String,
    pub hyper: HyperParams,
    pub certified: bool,
    pub p1_star: f64,
    pub p2_star: f64,
    pub gamma1_star: f64,
    pub gamma2_star: f64,
}

impl HyperRecord {
    pub fn new(method: &str, hyper: HyperParams, c: &Certification) -> Self {
        HyperRecord {
            method: method.to_string(),
            hyper,
            certified: c.certified,
            p1_star: c.p1_star,
            p2_star: c.p2_star,
            gamma1_star: c.gamma1_star,
            gamma2_star: c.gamma2_star,
        }
    }

    pub fn to_text(&self, config_echo: &str) -> String {
        let mut s = String::new();
        writeln!(s, "# trustbayes hyperparameters").unwrap();
        writeln!(s, "# config: {config_echo}").unwrap();
        writeln!(s, "method={}", self.method).unwrap();
        writeln!(s, "theta={}", format_real(self.hyper.theta)).unwrap();
        writeln!(s, "phi1={}", format_real(self.hyper.phi1)).unwrap();
        writeln!(s, "phi2={}", format_real(self.hyper.phi2)).unwrap();
        writeln!(s, "certified={}", self.certified).unwrap();
        writeln!(s, "p1_star={}", format_real(self.p1_star)).unwrap();
        writeln!(s, "p2_star={}", format_real(self.p2_star)).unwrap();
        writeln!(s, "gamma1_star={}", format_real(self.gamma1_star)).unwrap();
        writeln!(s, "gamma2_star={}", format_real(self.gamma2_star)).unwrap();
        s
    }

    /// Requires `theta`, `phi1`, `phi2`; the rest default to "unknown"
    /// (`method` empty, `certified` false, bounds NaN).
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut method = String::new();
        let (mut theta, mut phi1, mut phi2) = (None, None, None);
        let mut certified = false;
        let mut p = [f64::NAN; 4];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let real = || parse_real(v).map_err(|m| perr(format!("{k}: {m}")));
            match k {
                "method" => method = v.to_string(),
                "theta" => theta = Some(real()?),
                "phi1" => phi1 = Some(real()?),
                "phi2" => phi2 = Some(real()?),
                "certified" => {
                    certified = v
                        .parse()
                        .map_err(|_| perr(format!("certified: expected true/false, got {v:?}")))?
                }
                "p1_star" => p[0] = real()?,
                "p2_star" => p[1] = real()?,
                "gamma1_star" => p[2] = real()?,
                "gamma2_star" => p[3] = real()?,
                _ => return Err(perr(format!("unknown key {k:?}"))),
            }
        }
        let missing = |k: &str| Error::Parse {
            line: text.lines().count().max(1),
            msg: format!("missing key {k}"),
        };
        let hyper = HyperParams::new(
            theta.ok_or_else(|| missing("theta"))?,
            phi1.ok_or_else(|| missing("phi1"))?,
            phi2.ok_or_else(|| missing("phi2"))?,
        )?;
        Ok(HyperRecord {
            method,
            hyper,
            certified,
            p1_star: p[0],
            p2_star: p[1],
            gamma1_star: p[2],
            gamma2_star: p[3],
        })
    }
}

fn parse_real(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|e| format!("{e} in {v:?}"))
}

pub fn log_to_csv(log: &TrainLog, config_echo: &str) -> String {
    let mut s = String::new();
    writeln!(s, "# method: {}", log.method.name()).unwrap();
    writeln!(s, "# config: {config_echo}").unwrap();
    writeln!(s, "{}", LOG_HEADER.join(",")).unwrap();
    for r in &log.records {
        let reals = [
            r.nmll,
            r.smoothed_prior_incl,
            r.smoothed_post_incl,
            r.exact_prior_incl,
            r.exact_post_incl,
            r.p1_star,
            r.p2_star,
            r.hyper.theta,
            r.hyper.phi1,
            r.hyper.phi2,
        ];
        write!(s, "{}", r.step).unwrap();
        for v in reals {
            write!(s, ",{}", format_real(v)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn report_to_text(method: &str, r: &EvalReport, config_echo: &str) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_real);
    let mut s = String::new();
    writeln!(s, "# trustbayes evaluation report").unwrap();
    writeln!(s, "# config: {config_echo}").unwrap();
    writeln!(
        s,
        "# eval: n_test_tasks={} n_test_inputs={} t_tr_test={} q={} seed={}",
        r.config.n_test_tasks, r.config.n_test_inputs, r.config.t_tr_test, r.config.q, r.config.seed
    )
    .unwrap();
    writeln!(s, "method={method}").unwrap();
    writeln!(s, "prior_inclusion={}", format_real(r.prior_inclusion)).unwrap();
    writeln!(s, "posterior_inclusion={}", format_real(r.posterior_inclusion)).unwrap();
    writeln!(s, "mse={}", format_real(r.mse)).unwrap();
    writeln!(s, "eval_split_prior_inclusion={}", opt(r.eval_split_prior_inclusion)).unwrap();
    writeln!(s, "eval_split_posterior_inclusion={}", opt(r.eval_split_posterior_inclusion)).unwrap();
    writeln!(s, "theta={}", format_real(r.hyper.theta)).unwrap();
    writeln!(s, "phi1={}", format_real(r.hyper.phi1)).unwrap();
    writeln!(s, "phi2={}", format_real(r.hyper.phi2)).unwrap();
    s
}

pub fn report_csv_row(method: &str, r: &EvalReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_real);
    [
        method.to_string(),
        format_real(r.prior_inclusion),
        format_real(r.posterior_inclusion),
        format_real(r.mse),
        opt(r.eval_split_prior_inclusion),
        opt(r.eval_split_posterior_inclusion),
        format_real(r.hyper.theta),
        format_real(r.hyper.phi1),
        format_real(r.hyper.phi2),
    ]
    .join(",")
}

pub fn report_to_csv(method: &str, r: &EvalReport) -> String {
    format!("{}\n{}\n", REPORT_HEADER.join(","), report_csv_row(method, r))
}

/// Side-by-side table with one column per method and five metric rows.
pub fn comparison_table(reports: &[(&str, &EvalReport)]) -> String {
    let rows: [(&str, fn(&EvalReport) -> Option<f64>); 5] = [
        ("empirical prior inclusion", |r| r.eval_split_prior_inclusion),
        ("empirical posterior inclusion", |r| r.eval_split_posterior_inclusion),
        ("expected prior inclusion", |r| Some(r.prior_inclusion)),
        ("expected posterior inclusion", |r| Some(r.posterior_inclusion)),
        ("MSE", |r| Some(r.mse)),
    ];
    let mut s = String::from("metric");
    for (m, _) in reports {
        write!(s, ",{m}").unwrap();
    }
    s.push('\n');
    for (name, get) in rows {
        s.push_str(name);
        for (_, r) in reports {
            let cell = get(r).map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
            write!(s, ",{cell}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn fixture_to_csv(rows: &[FixtureRow], config_echo: &str) -> String {
    let mut s = String::new();
    writeln!(s, "# config: {config_echo}").unwrap();
    writeln!(s, "{}", FIXTURE_HEADER.join(",")).unwrap();
    for r in rows {
        write!(s, "{}", r.func_id).unwrap();
        let reals = [
            r.x,
            r.f,
            r.a_prior.lo,
            r.a_prior.hi,
            r.a_post.lo,
            r.a_post.hi,
            r.b_prior.lo,
            r.b_prior.hi,
            r.b_post.lo,
            r.b_post.hi,
        ];
        for v in reals {
            write!(s, ",{}", format_real(v)).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Numeric CSV with `#` comments. Returns the header, the data rows with
/// their 1-based line numbers, and the comment lines.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
    pub comments: Vec<String>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        let mut comments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end_matches('\r');
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match &header {
                None => header = Some(fields.iter().map(|f| f.to_string()).collect()),
                Some(h) => {
                    if fields.len() != h.len() {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("expected {} fields, found {}", h.len(), fields.len()),
                        });
                    }
                    let values = fields
                        .iter()
                        .map(|f| {
                            parse_real(f).map_err(|m| Error::Parse {
                                line: lineno,
                                msg: m,
                            })
                        })
                        .collect::<Result<Vec<f64>, Error>>()?;
                    rows.push((lineno, values));
                }
            }
        }
        let header = header.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            msg: "no header line".into(),
        })?;
        if rows.is_empty() {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                msg: "no data rows".into(),
            });
        }
        Ok(Table {
            header,
            rows,
            comments,
        })
    }

    pub fn has_header(&self, expected: &[&str]) -> bool {
        self.header.len() == expected.len() && self.header.iter().zip(expected).all(|(a, b)| a == b)
    }

    /// Value of the `# key: value` comment, if any.
    pub fn comment(&self, key: &str) -> Option<&str> {
        self.comments
            .iter()
            .find_map(|c| c.strip_prefix(key).and_then(|r| r.strip_prefix(':')).map(str::trim))
    }
}

pub fn fixture_rows(table: &Table) -> Vec<FixtureRow> {
    let iv = |lo: f64, hi: f64| Interval { lo, hi };
    table
        .rows
        .iter()
        .map(|(_, v)| FixtureRow {
            func_id: v[0] as u64,
            x: v[1],
            f: v[2],
            a_prior: iv(v[3], v[4]),
            a_post: iv(v[5], v[6]),
            b_prior: iv(v[7], v[8]),
            b_post: iv(v[9], v[10]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyper_record_round_trips_bit_exactly() {
        let h = HyperParams::new(-0.1300773643246409, 19.940639153474862, 466.2161012519693).unwrap();
        let rec = HyperRecord {
            method: "meta-prior".into(),
            hyper: h,
            certified: false,
            p1_star: 0.6587586794102044,
            p2_star: 0.736126096432632,
            gamma1_star: 0.008983889305864846,
            gamma2_star: 1e-300,
        };
        let back = HyperRecord::parse(&rec.to_text("{}")).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.hyper.phi2.to_bits(), h.phi2.to_bits());
    }

    #[test]
    fn hyper_record_errors_carry_lines() {
        let e = HyperRecord::parse("theta=1\nphi1=oops\nphi2=1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = HyperRecord::parse("theta=1\nphi1=2\n").unwrap_err();
        assert!(e.to_string().contains("phi2"));
        assert!(HyperRecord::parse("theta=1\nphi1=-2\nphi2=1\n").is_err());
    }

    #[test]
    fn table_parse_errors() {
        assert!(matches!(Table::parse(""), Err(Error::Parse { .. })));
        assert!(matches!(Table::parse("# only\na,b\n"), Err(Error::Parse { line: 2, .. })));
        let e = Table::parse("a,b\n1,2\n3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let e = Table::parse("#c\na,b\n1,x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let t = Table::parse("# config: {\"a\":1}\na,b\n1,2\n").unwrap();
        assert_eq!(t.comment("config"), Some("{\"a\":1}"));
        assert!(t.has_header(&["a", "b"]));
    }
}
