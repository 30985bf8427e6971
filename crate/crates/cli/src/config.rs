//! JSON problem description shared by all subcommands.
//!
//! Shape checks run inside deserialization, so errors carry serde_json's
//! line/column position; cross-field checks name the offending path.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use qsc_core::certify::LyapunovSpec;
use qsc_core::numerics::{matrix_from_rows, SpdMatrix};
use qsc_core::quantization::QuantizerSpec;
use qsc_core::signals::{adversarial_signal, AdversarialVariant, Mode, SwitchingSignal};
use qsc_core::simulator::{ModeData, SwitchedSystem};

type Rows = Vec<Vec<f64>>;

/// Evaluation time `t` and optional `T₀` of an adversarial instance.
pub type Evaluation = (f64, Option<f64>);

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn shape(rows: &Rows, what: &str) -> Result<(usize, usize), String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(format!("{what} is empty"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(format!("{what} has rows of different lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(format!("{what} has non-finite entries"));
    }
    Ok((r, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    id: Mode,
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    k: Option<Rows>,
}

/// One plant `(A_p, B_p)` with an optional gain `K_p` (`u = K_p x`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMode", into = "RawMode")]
pub struct ModeConfig {
    pub id: Mode,
    pub a: Rows,
    pub b: Rows,
    pub k: Option<Rows>,
}

impl TryFrom<RawMode> for ModeConfig {
    type Error = String;

    fn try_from(r: RawMode) -> Result<Self, String> {
        let tag = format!("mode {}", r.id);
        let (n, nc) = shape(&r.a, &format!("{tag}: A"))?;
        if n != nc {
            return Err(format!("{tag}: A must be square, got {n}x{nc}"));
        }
        let (br, m) = shape(&r.b, &format!("{tag}: B"))?;
        if br != n {
            return Err(format!("{tag}: B has {br} rows, expected {n}"));
        }
        if let Some(k) = &r.k {
            let (kr, kc) = shape(k, &format!("{tag}: K"))?;
            if (kr, kc) != (m, n) {
                return Err(format!("{tag}: K must be {m}x{n}, got {kr}x{kc}"));
            }
        }
        Ok(Self {
            id: r.id,
            a: r.a,
            b: r.b,
            k: r.k,
        })
    }
}

impl From<ModeConfig> for RawMode {
    fn from(m: ModeConfig) -> Self {
        Self {
            id: m.id,
            a: m.a,
            b: m.b,
            k: m.k,
        }
    }
}

/// LQR weights used for every mode without an explicit `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrWeights {
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub modes: Vec<ModeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLyapunov {
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    p: Option<Rows>,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "R")]
    big_r: f64,
    r: f64,
}

/// `(P, C, R, r)`; `P` may be omitted when `--suggest-p` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLyapunov", into = "RawLyapunov")]
pub struct LyapunovConfig {
    pub p: Option<Rows>,
    pub c: f64,
    pub big_r: f64,
    pub r: f64,
}

impl TryFrom<RawLyapunov> for LyapunovConfig {
    type Error = String;

    fn try_from(l: RawLyapunov) -> Result<Self, String> {
        if !(l.c > 0.0 && l.c.is_finite()) {
            return Err(format!("lyapunov: C must be > 0, got {}", l.c));
        }
        if !(l.big_r > l.r && l.r > 0.0 && l.big_r.is_finite()) {
            return Err(format!("lyapunov: need R > r > 0, got R = {}, r = {}", l.big_r, l.r));
        }
        if let Some(p) = &l.p {
            let (a, b) = shape(p, "lyapunov: P")?;
            if a != b {
                return Err(format!("lyapunov: P must be square, got {a}x{b}"));
            }
        }
        Ok(Self {
            p: l.p,
            c: l.c,
            big_r: l.big_r,
            r: l.r,
        })
    }
}

impl From<LyapunovConfig> for RawLyapunov {
    fn from(l: LyapunovConfig) -> Self {
        Self {
            p: l.p,
            c: l.c,
            big_r: l.big_r,
            r: l.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    Explicit {
        initial_mode: Mode,
        #[serde(default)]
        switches: Vec<(f64, Mode)>,
    },
    /// Seeded, dwell time at least `n·Ts`.
    RandomDwell { modes: Vec<Mode>, n: u32 },
    /// First switch at `period + offset`, then every `period`.
    Periodic {
        modes: Vec<Mode>,
        period: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Near-worst-case dwell-`n·Ts` construction between modes 1 and 2.
    Adversarial {
        n: u32,
        m: u32,
        epsilon: f64,
        variant: AdversarialVariant,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    pub quantizer: QuantizerSpec,
    #[serde(rename = "Ts")]
    pub ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "D_override", default, skip_serializing_if = "Option::is_none")]
    pub d_override: Option<f64>,
}

impl ProblemConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_string(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    fn dims(&self) -> (usize, usize) {
        let m = &self.system.modes[0];
        (m.a.len(), m.b[0].len())
    }

    /// Cross-field checks; runs before anything is computed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let modes = &self.system.modes;
        if modes.is_empty() {
            return Err(invalid("system.modes: need at least one mode"));
        }
        let (n, m) = self.dims();
        let mut seen = BTreeMap::new();
        for (i, md) in modes.iter().enumerate() {
            if (md.a.len(), md.b[0].len()) != (n, m) {
                return Err(invalid(format!(
                    "system.modes[{i}]: dimensions {}x{} differ from mode {} ({n}x{m})",
                    md.a.len(),
                    md.b[0].len(),
                    modes[0].id
                )));
            }
            if seen.insert(md.id, i).is_some() {
                return Err(invalid(format!("system.modes[{i}]: duplicate id {}", md.id)));
            }
        }
        let needs_lqr = modes.iter().any(|md| md.k.is_none());
        match &self.system.lqr {
            Some(w) => {
                let q = shape(&w.q, "system.lqr.Q").map_err(invalid)?;
                let r = shape(&w.r, "system.lqr.R").map_err(invalid)?;
                if q != (n, n) || r != (m, m) {
                    return Err(invalid(format!("system.lqr: Q must be {n}x{n} and R {m}x{m}")));
                }
            }
            None if needs_lqr => {
                return Err(invalid("system: a mode has no K and system.lqr is missing"));
            }
            None => {}
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(invalid(format!("Ts must be > 0, got {}", self.ts)));
        }
        if let Some(l) = &self.lyapunov {
            if let Some(p) = &l.p {
                if p.len() != n {
                    return Err(invalid(format!("lyapunov.P must be {n}x{n}")));
                }
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("x0 must have {n} finite entries")));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid(format!("horizon must be > 0, got {h}")));
            }
        }
        if let Some(dt) = self.record_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid(format!("record_dt must be > 0, got {dt}")));
            }
        }
        if let Some(d) = self.d_override {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(invalid(format!("D_override must be >= 0, got {d}")));
            }
        }
        let known = |p: &Mode| seen.contains_key(p);
        match &self.signal {
            Some(SignalConfig::Explicit { initial_mode, switches }) => {
                if let Some(bad) = std::iter::once(initial_mode).chain(switches.iter().map(|(_, p)| p)).find(|p| !known(p)) {
                    return Err(invalid(format!("signal: unknown mode {bad}")));
                }
            }
            Some(SignalConfig::RandomDwell { modes, .. }) | Some(SignalConfig::Periodic { modes, .. }) => {
                if let Some(bad) = modes.iter().find(|p| !known(p)) {
                    return Err(invalid(format!("signal: unknown mode {bad}")));
                }
            }
            Some(SignalConfig::Adversarial { .. }) if !(known(&1) && known(&2)) => {
                return Err(invalid("signal: adversarial signals switch between modes 1 and 2"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<SwitchedSystem, ConfigError> {
        let mat = |rows: &Rows| matrix_from_rows(rows).map_err(|e| invalid(e.to_string()));
        let weights = match &self.system.lqr {
            Some(w) => Some((
                SpdMatrix::from_rows(&w.q).map_err(|e| invalid(format!("system.lqr.Q: {e}")))?,
                SpdMatrix::from_rows(&w.r).map_err(|e| invalid(format!("system.lqr.R: {e}")))?,
            )),
            None => None,
        };
        let mut modes = BTreeMap::new();
        for md in &self.system.modes {
            let (a, b) = (mat(&md.a)?, mat(&md.b)?);
            let k = match (&md.k, &weights) {
                (Some(k), _) => mat(k)?,
                (None, Some((q, r))) => qsc_core::numerics::lqr_gain(&a, &b, q, r)
                    .map_err(|e| invalid(format!("mode {}: LQR synthesis failed: {e}", md.id)))?,
                (None, None) => unreachable!("validated"),
            };
            modes.insert(md.id, ModeData { a, b, k });
        }
        SwitchedSystem::new(modes).map_err(|e| invalid(e.to_string()))
    }

    /// The Lyapunov data with `P` required.
    pub fn lyapunov_spec(&self) -> Result<LyapunovSpec, ConfigError> {
        let l = self.lyapunov.as_ref().ok_or_else(|| invalid("lyapunov section is required"))?;
        let p = l
            .p
            .as_ref()
            .ok_or_else(|| invalid("lyapunov.P is missing (pass --suggest-p to synthesize one)"))?;
        let p = SpdMatrix::from_rows(p).map_err(|e| invalid(format!("lyapunov.P: {e}")))?;
        LyapunovSpec::new(p, l.c, l.big_r, l.r).map_err(|e| invalid(e.to_string()))
    }

    pub fn x0(&self) -> Result<DVector<f64>, ConfigError> {
        self.x0
            .as_ref()
            .map(|v| DVector::from_vec(v.clone()))
            .ok_or_else(|| invalid("x0 is required"))
    }

    pub fn horizon(&self) -> Result<f64, ConfigError> {
        self.horizon.ok_or_else(|| invalid("horizon is required"))
    }

    /// The configured signal; adversarial instances also return their
    /// evaluation time `t` and `T₀`.
    pub fn build_signal(&self, seed: u64) -> Result<(SwitchingSignal, Option<Evaluation>), ConfigError> {
        let spec = self.signal.as_ref().ok_or_else(|| invalid("signal section is required"))?;
        let err = |e: qsc_core::signals::SignalError| invalid(format!("signal: {e}"));
        Ok(match spec {
            SignalConfig::Explicit { initial_mode, switches } => (SwitchingSignal::from_pairs(*initial_mode, switches).map_err(err)?, None),
            SignalConfig::RandomDwell { modes, n } => (
                SwitchingSignal::random_dwell(modes, *n, self.ts, self.horizon()?, seed).map_err(err)?,
                None,
            ),
            SignalConfig::Periodic { modes, period, offset } => (
                SwitchingSignal::periodic(modes, *period, *offset, self.horizon()?).map_err(err)?,
                None,
            ),
            SignalConfig::Adversarial { n, m, epsilon, variant } => {
                let inst = adversarial_signal(*n, self.ts, *m, *epsilon, *variant).map_err(err)?;
                (inst.signal, Some((inst.t, inst.t0)))
            }
        })
    }

    /// Dwell multiple `n` the signal was built for, if it says.
    pub fn signal_dwell_n(&self) -> Option<u32> {
        match self.signal.as_ref()? {
            SignalConfig::RandomDwell { n, .. } | SignalConfig::Adversarial { n, .. } => Some(*n),
            _ => None,
        }
    }
}

/// The two-mode benchmark with its fixed-dwell scenario.
pub fn example_config() -> ProblemConfig {
    use qsc_core::example as ex;
    let rows = |m: &qsc_core::numerics::Matrix| qsc_core::numerics::matrix_to_rows(m);
    let modes = ex::plants()
        .into_iter()
        .map(|(id, a, b)| ModeConfig {
            id,
            a: rows(&a),
            b: rows(&b),
            k: None,
        })
        .collect();
    let (q, r) = ex::lqr_weights();
    ProblemConfig {
        system: SystemConfig {
            modes,
            lqr: Some(LqrWeights {
                q: rows(q.matrix()),
                r: rows(r.matrix()),
            }),
        },
        quantizer: QuantizerSpec::Logarithmic {
            xi0: ex::XI0,
            kappa: ex::KAPPA,
        },
        ts: ex::TS,
        lyapunov: Some(LyapunovConfig {
            p: Some(ex::P_ROWS.iter().map(|r| r.to_vec()).collect()),
            c: ex::C,
            big_r: ex::BIG_R,
            r: ex::R_SMALL,
        }),
        signal: Some(SignalConfig::Periodic {
            modes: vec![1, 2],
            period: ex::DWELL,
            offset: ex::TS / 2.0,
        }),
        x0: Some(ex::X0.to_vec()),
        horizon: Some(ex::HORIZON),
        record_dt: None,
        seed: 0,
        d_override: Some(ex::REPORTED_D),
    }
}
