//! File formats: chain configs (TOML), circuit text, the compiled schedule
//! export, CSV tables with settings digests, state snapshots, and a small
//! self-contained SVG plot writer.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{engineered_couplings, ChainSpec};
use crate::compiler::{GateOp, IdealGate, Marker, Schedule};
use crate::error::{Error, Result};
use crate::oracle::Control;
use crate::pulse::{Intent, PulseProgram, PulseSequence, PulseStep, Quadrature, Tone};

/// Short hex digest of any serializable value (canonical JSON bytes).
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).unwrap_or_default();
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let out = hasher.finalize();
    let mut s = String::with_capacity(16);
    for b in &out[..8] {
        let _ = write!(s, "{b:02x}");
    }
    s
}

// ---------------------------------------------------------------------------
// chain config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CouplingsField {
    Tag(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum FieldsField {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigDoc {
    n_sites: usize,
    couplings: CouplingsField,
    #[serde(default)]
    fields: Option<FieldsField>,
    #[serde(default)]
    gamma: f64,
    #[serde(default)]
    offset: f64,
}

/// Parse a chain config document:
///
/// ```toml
/// n_sites = 101
/// couplings = "engineered"   # or "uniform", "uniform-interface", or a list
/// fields = 0.0               # scalar broadcast or per-site list
/// gamma = 0.0
/// offset = 1.4142135623730951
/// ```
pub fn parse_config(text: &str, file: &str) -> Result<ChainSpec> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count())
            .unwrap_or(0);
        Error::Parse {
            file: file.into(),
            line,
            field: "config".into(),
            message: e.message().to_string(),
        }
    })?;
    let n = doc.n_sites;
    if n < 2 {
        return Err(Error::InvalidSize { min: 2, got: n });
    }
    let couplings = match doc.couplings {
        CouplingsField::Tag(tag) => match tag.as_str() {
            "engineered" => {
                let mut j = vec![0.0];
                j.extend(engineered_couplings(n)?);
                j
            }
            "uniform" => vec![1.0; n - 1],
            "uniform-interface" => {
                let mut j = vec![1.0; n - 1];
                j[0] = 0.0;
                j
            }
            other => {
                return Err(Error::Parse {
                    file: file.into(),
                    line: 0,
                    field: "couplings".into(),
                    message: format!(
                        "unknown tag `{other}` (expected engineered, uniform, uniform-interface, or a list)"
                    ),
                })
            }
        },
        CouplingsField::List(list) => list,
    };
    let fields = match doc.fields {
        None => vec![0.0; n],
        Some(FieldsField::Scalar(v)) => {
            let mut f = vec![v; n];
            // the interface convention pins B_1 = 0; a scalar field means
            // sites 2..N
            f[0] = 0.0;
            f
        }
        Some(FieldsField::List(list)) => list,
    };
    ChainSpec::new(couplings, fields, doc.gamma, doc.offset).map_err(|e| match e {
        Error::Parse { field, message, .. } => Error::Parse {
            file: file.into(),
            line: 0,
            field,
            message,
        },
        other => other,
    })
}

pub fn write_config(spec: &ChainSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_sites = {}", spec.n_sites);
    let _ = writeln!(
        s,
        "couplings = [{}]",
        spec.couplings
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(
        s,
        "fields = [{}]",
        spec.fields
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(s, "gamma = {}", spec.gamma);
    let _ = writeln!(s, "offset = {}", spec.offset);
    s
}

// ---------------------------------------------------------------------------
// circuit text
// ---------------------------------------------------------------------------

/// Parse the line-oriented circuit format: one gate per line,
/// `XROT n theta`, `ZROT n phi`, `CX m n theta`, `MEASURE n`, `PREPARE`.
/// `#` starts a comment.
pub fn parse_circuit(text: &str, file: &str) -> Result<Vec<GateOp>> {
    let mut gates = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let op = parts.next().unwrap().to_ascii_uppercase();
        let err = |field: &str, msg: String| Error::Parse {
            file: file.into(),
            line: line_no,
            field: field.into(),
            message: msg,
        };
        let next_usize = |parts: &mut std::str::SplitWhitespace, what: &str| -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| err(what, "missing argument".into()))?
                .parse()
                .map_err(|e| err(what, format!("{e}")))
        };
        let next_f64 = |parts: &mut std::str::SplitWhitespace, what: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| err(what, "missing argument".into()))?
                .parse()
                .map_err(|e| err(what, format!("{e}")))
        };
        let gate = match op.as_str() {
            "XROT" => GateOp::XRot(next_usize(&mut parts, "qubit")?, next_f64(&mut parts, "angle")?),
            "ZROT" => GateOp::ZRot(next_usize(&mut parts, "qubit")?, next_f64(&mut parts, "angle")?),
            "CX" | "CXROT" => GateOp::CXRot(
                next_usize(&mut parts, "control")?,
                next_usize(&mut parts, "target")?,
                next_f64(&mut parts, "angle")?,
            ),
            "MEASURE" => GateOp::Measure(next_usize(&mut parts, "qubit")?),
            "PREPARE" => GateOp::PrepareAll,
            other => {
                return Err(Error::Parse {
                    file: file.into(),
                    line: line_no,
                    field: "gate".into(),
                    message: format!("unknown gate `{other}`"),
                })
            }
        };
        if let Some(extra) = parts.next() {
            return Err(Error::Parse {
                file: file.into(),
                line: line_no,
                field: "gate".into(),
                message: format!("unexpected trailing token `{extra}`"),
            });
        }
        gates.push(gate);
    }
    Ok(gates)
}

// ---------------------------------------------------------------------------
// schedule export
// ---------------------------------------------------------------------------

fn control_name(c: Control) -> &'static str {
    c.name()
}

fn control_from_name(s: &str) -> Option<Control> {
    Some(match s {
        "h1" => Control::H1,
        "h2" => Control::H2,
        "h3" => Control::H3,
        "h2q" => Control::H2Quadrature,
        _ => return None,
    })
}

/// Text export of a compiled schedule: one `step` stanza per pulse or wait,
/// `marker` lines keyed to step boundaries, the per-mode phase ledger, and
/// the declared ideal gates.
pub fn write_schedule(schedule: &Schedule) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# chainctl schedule v1");
    let _ = writeln!(s, "# digest: {}", digest_of(&schedule.sequence));
    for w in &schedule.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    for step in &schedule.sequence.steps {
        match step {
            PulseStep::Wait(d) => {
                let _ = writeln!(s, "step wait duration={d}");
            }
            PulseStep::Pulse(p) => {
                let _ = writeln!(
                    s,
                    "step pulse target={} duration={} intent={}",
                    control_name(p.target),
                    p.duration,
                    encode_intent(&p.annotation)
                );
                for t in &p.tones {
                    let quad = match t.quadrature {
                        Quadrature::Cosine => "cosine".to_string(),
                        Quadrature::Circular { sense } => format!("circular:{sense}"),
                    };
                    let _ = writeln!(
                        s,
                        "  tone amplitude={} frequency={} phase={} quadrature={quad}",
                        t.amplitude, t.angular_frequency, t.phase
                    );
                }
            }
        }
    }
    for m in &schedule.markers {
        match m {
            Marker::LogicalZ { at_step, qubit } => {
                let _ = writeln!(s, "marker at={at_step} logical_z qubit={qubit}");
            }
            Marker::Measure {
                at_step,
                flip_to,
                label,
            } => {
                let flip = match flip_to {
                    None => "none".into(),
                    Some(true) => "occupied".to_string(),
                    Some(false) => "empty".to_string(),
                };
                let _ = writeln!(s, "marker at={at_step} measure flip_to={flip} label=\"{label}\"");
            }
        }
    }
    let _ = writeln!(
        s,
        "phases {}",
        schedule
            .mode_phases
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    for g in &schedule.ideal {
        match g {
            IdealGate::Rotation { qubit, angle } => {
                let _ = writeln!(s, "ideal rotation qubit={qubit} angle={angle}");
            }
            IdealGate::Phase { qubit, angle } => {
                let _ = writeln!(s, "ideal phase qubit={qubit} angle={angle}");
            }
            IdealGate::Conditional {
                control,
                target,
                angle,
            } => {
                let _ = writeln!(
                    s,
                    "ideal conditional control={control} target={target} angle={angle}"
                );
            }
            IdealGate::Prepare => {
                let _ = writeln!(s, "ideal prepare");
            }
            IdealGate::Measure { qubit } => {
                let _ = writeln!(s, "ideal measure qubit={qubit}");
            }
        }
    }
    s
}

fn kv<'a>(token: &'a str, key: &str) -> Option<&'a str> {
    token.strip_prefix(key)?.strip_prefix('=')
}

fn encode_intent(intent: &Intent) -> String {
    match intent {
        Intent::Swap { mode } => format!("swap:{mode}"),
        Intent::Rotate { mode, angle } => format!("rotate:{mode}:{angle}"),
        Intent::Entangle { qubit, angle } => format!("entangle:{qubit}:{angle}"),
        Intent::Flip => "flip".into(),
        Intent::SquareWave => "square".into(),
        Intent::Custom(s) => format!("\"{s}\""),
    }
}

fn decode_intent(text: &str) -> std::result::Result<Intent, String> {
    if let Some(stripped) = text.strip_prefix('"') {
        return Ok(Intent::Custom(stripped.trim_end_matches('"').to_string()));
    }
    let parts: Vec<&str> = text.split(':').collect();
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| e.to_string());
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| e.to_string());
    match parts.as_slice() {
        ["swap", m] => Ok(Intent::Swap { mode: parse_usize(m)? }),
        ["rotate", m, a] => Ok(Intent::Rotate {
            mode: parse_usize(m)?,
            angle: parse_f64(a)?,
        }),
        ["entangle", q, a] => Ok(Intent::Entangle {
            qubit: parse_usize(q)?,
            angle: parse_f64(a)?,
        }),
        ["flip"] => Ok(Intent::Flip),
        ["square"] => Ok(Intent::SquareWave),
        other => Err(format!("unknown intent {other:?}")),
    }
}

/// Parse the schedule export format back into a [`Schedule`].
pub fn parse_schedule(text: &str, file: &str) -> Result<Schedule> {
    let mut steps: Vec<PulseStep> = Vec::new();
    let mut markers = Vec::new();
    let mut mode_phases = Vec::new();
    let mut ideal = Vec::new();
    let err = |line: usize, field: &str, message: String| Error::Parse {
        file: file.into(),
        line,
        field: field.into(),
        message,
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let indented = line.starts_with(' ');
        let tokens: Vec<&str> = split_tokens(line.trim());
        match (indented, tokens[0]) {
            (false, "step") => match tokens.get(1) {
                Some(&"wait") => {
                    let d = tokens
                        .iter()
                        .find_map(|t| kv(t, "duration"))
                        .ok_or_else(|| err(line_no, "duration", "missing".into()))?
                        .parse()
                        .map_err(|e| err(line_no, "duration", format!("{e}")))?;
                    steps.push(PulseStep::Wait(d));
                }
                Some(&"pulse") => {
                    let target = tokens
                        .iter()
                        .find_map(|t| kv(t, "target"))
                        .and_then(control_from_name)
                        .ok_or_else(|| err(line_no, "target", "missing or unknown".into()))?;
                    let duration: f64 = tokens
                        .iter()
                        .find_map(|t| kv(t, "duration"))
                        .ok_or_else(|| err(line_no, "duration", "missing".into()))?
                        .parse()
                        .map_err(|e| err(line_no, "duration", format!("{e}")))?;
                    let intent = tokens
                        .iter()
                        .find_map(|t| kv(t, "intent"))
                        .map(|s| decode_intent(s))
                        .transpose()
                        .map_err(|m| err(line_no, "intent", m))?
                        .unwrap_or(Intent::Custom(String::new()));
                    steps.push(PulseStep::Pulse(PulseProgram {
                        target,
                        tones: Vec::new(),
                        duration,
                        annotation: intent,
                    }));
                }
                _ => return Err(err(line_no, "step", "expected wait or pulse".into())),
            },
            (true, "tone") => {
                let get = |key: &str| -> Result<f64> {
                    tokens
                        .iter()
                        .find_map(|t| kv(t, key))
                        .ok_or_else(|| err(line_no, key, "missing".into()))?
                        .parse()
                        .map_err(|e| err(line_no, key, format!("{e}")))
                };
                let quadrature = match tokens.iter().find_map(|t| kv(t, "quadrature")) {
                    None | Some("cosine") => Quadrature::Cosine,
                    Some(q) => {
                        let sense = q
                            .strip_prefix("circular:")
                            .ok_or_else(|| err(line_no, "quadrature", format!("unknown `{q}`")))?
                            .parse()
                            .map_err(|e| err(line_no, "quadrature", format!("{e}")))?;
                        Quadrature::Circular { sense }
                    }
                };
                let tone = Tone {
                    amplitude: get("amplitude")?,
                    angular_frequency: get("frequency")?,
                    phase: get("phase")?,
                    quadrature,
                };
                match steps.last_mut() {
                    Some(PulseStep::Pulse(p)) => p.tones.push(tone),
                    _ => return Err(err(line_no, "tone", "tone outside a pulse".into())),
                }
            }
            (false, "marker") => {
                let at: usize = tokens
                    .iter()
                    .find_map(|t| kv(t, "at"))
                    .ok_or_else(|| err(line_no, "at", "missing".into()))?
                    .parse()
                    .map_err(|e| err(line_no, "at", format!("{e}")))?;
                if tokens.contains(&"logical_z") {
                    let qubit = tokens
                        .iter()
                        .find_map(|t| kv(t, "qubit"))
                        .ok_or_else(|| err(line_no, "qubit", "missing".into()))?
                        .parse()
                        .map_err(|e| err(line_no, "qubit", format!("{e}")))?;
                    markers.push(Marker::LogicalZ { at_step: at, qubit });
                } else if tokens.contains(&"measure") {
                    let flip_to = match tokens.iter().find_map(|t| kv(t, "flip_to")) {
                        None | Some("none") => None,
                        Some("occupied") => Some(true),
                        Some("empty") => Some(false),
                        Some(other) => {
                            return Err(err(line_no, "flip_to", format!("unknown `{other}`")))
                        }
                    };
                    let label = tokens
                        .iter()
                        .find_map(|t| kv(t, "label"))
                        .map(|s| s.trim_matches('"').to_string())
                        .unwrap_or_default();
                    markers.push(Marker::Measure {
                        at_step: at,
                        flip_to,
                        label,
                    });
                } else {
                    return Err(err(line_no, "marker", "unknown marker kind".into()));
                }
            }
            (false, "phases") => {
                mode_phases = tokens[1..]
                    .iter()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|e| err(line_no, "phases", format!("{e}")))?;
            }
            (false, "ideal") => {
                let get_usize = |key: &str| -> Result<usize> {
                    tokens
                        .iter()
                        .find_map(|t| kv(t, key))
                        .ok_or_else(|| err(line_no, key, "missing".into()))?
                        .parse()
                        .map_err(|e| err(line_no, key, format!("{e}")))
                };
                let get_f64 = |key: &str| -> Result<f64> {
                    tokens
                        .iter()
                        .find_map(|t| kv(t, key))
                        .ok_or_else(|| err(line_no, key, "missing".into()))?
                        .parse()
                        .map_err(|e| err(line_no, key, format!("{e}")))
                };
                let g = match tokens.get(1) {
                    Some(&"rotation") => IdealGate::Rotation {
                        qubit: get_usize("qubit")?,
                        angle: get_f64("angle")?,
                    },
                    Some(&"phase") => IdealGate::Phase {
                        qubit: get_usize("qubit")?,
                        angle: get_f64("angle")?,
                    },
                    Some(&"conditional") => IdealGate::Conditional {
                        control: get_usize("control")?,
                        target: get_usize("target")?,
                        angle: get_f64("angle")?,
                    },
                    Some(&"prepare") => IdealGate::Prepare,
                    Some(&"measure") => IdealGate::Measure {
                        qubit: get_usize("qubit")?,
                    },
                    _ => return Err(err(line_no, "ideal", "unknown ideal gate".into())),
                };
                ideal.push(g);
            }
            _ => return Err(err(line_no, "line", format!("unrecognized line `{line}`"))),
        }
    }
    for step in &steps {
        if let PulseStep::Pulse(p) = step {
            p.validate()?;
        }
    }
    Ok(Schedule {
        sequence: PulseSequence::new(steps),
        markers,
        mode_phases,
        ideal,
        warnings: Vec::new(),
    })
}

/// Split on spaces, keeping quoted substrings intact.
fn split_tokens(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = line;
    while !rest.is_empty() {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        let end = if let Some(q) = rest.find('"') {
            if rest[..q].contains(' ') {
                rest[..q].find(' ').unwrap()
            } else {
                // token includes the quoted section
                match rest[q + 1..].find('"') {
                    Some(e) => q + 1 + e + 1,
                    None => rest.len(),
                }
            }
        } else {
            rest.find(' ').unwrap_or(rest.len())
        };
        out.push(&rest[..end]);
        rest = &rest[end..];
    }
    out
}

// ---------------------------------------------------------------------------
// CSV with settings digest
// ---------------------------------------------------------------------------

/// Render a CSV document: a `# settings:` digest comment, a header row, then
/// the data rows.
pub fn render_csv<S: Serialize>(settings: &S, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# settings: {} digest: {}",
        serde_json::to_string(settings).unwrap_or_default(),
        digest_of(settings)
    );
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Parse a numeric CSV produced by [`render_csv`]: returns (header, rows).
pub fn parse_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if header.is_empty() {
            header = line.split(',').map(|s| s.trim().to_string()).collect();
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                file: "csv".into(),
                line: 0,
                field: "row".into(),
                message: format!("{e}"),
            })?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// State snapshot rows: (time, basis index, re, im).
pub fn render_snapshots(rows: &[(f64, usize, f64, f64)]) -> String {
    let mut out = String::from("time,basis_index,re,im\n");
    for (t, i, re, im) in rows {
        let _ = writeln!(out, "{t},{i},{re},{im}");
    }
    out
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

/// Minimal self-contained polyline plot. Series are (label, points); axes
/// are linear or log10 per flag.
pub fn render_svg(
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_x: bool,
    log_y: bool,
) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            if log_x && x <= 0.0 || log_y && y <= 0.0 {
                continue;
            }
            xmin = xmin.min(tx(x));
            xmax = xmax.max(tx(x));
            ymin = ymin.min(ty(y));
            ymax = ymax.max(ty(y));
        }
    }
    if !xmin.is_finite() || xmin == xmax {
        xmax = xmin + 1.0;
    }
    if !ymin.is_finite() || ymin == ymax {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| ml + (tx(x) - xmin) / (xmax - xmin) * (w - ml - mr);
    let py = |y: f64| h - mb - (ty(y) - ymin) / (ymax - ymin) * (h - mt - mb);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        ml, title
    );
    let _ = writeln!(
        s,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        w - ml - mr,
        h - mt - mb
    );
    // axis extremes
    let fmt_axis = |v: f64, log: bool| {
        if log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        }
    };
    let _ = writeln!(
        s,
        "<text x=\"{ml}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        h - mb + 16.0,
        fmt_axis(xmin, log_x)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
        w - mr,
        h - mb + 16.0,
        fmt_axis(xmax, log_x)
    );
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        h - mb,
        fmt_axis(ymin, log_y)
    );
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        mt + 6.0,
        fmt_axis(ymax, log_y)
    );
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| !(log_x && *x <= 0.0 || log_y && *y <= 0.0))
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if path.is_empty() {
            continue;
        }
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>",
            w - mr - 150.0,
            mt + 18.0 + 16.0 * k as f64,
            label
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
