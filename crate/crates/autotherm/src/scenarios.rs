//! Scenario layer: the preset catalog, the flat key=value config format,
//! scenario execution, and CSV / gnuplot emission.
//!
//! Times in configs and in emitted files are dimensionless: multiples of 1/g
//! for exchange models (g*t), 1/Gamma for the damped qubit (Gamma*t), and
//! 1/lambda for the damped-mode pair (lambda*t). Energies are in units of
//! hbar times the reference frequency (omega_A).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::{
    propagate_jc_blocks, propagate_lindblad, propagate_unitary, time_grid, Trajectory,
};
use crate::models::{
    build_jc, build_qubit_qubit, build_rc, build_spontaneous_emission, default_coherent_levels,
    make_initial_state, Dissipator, InitialFactor, InitialStateSpec, InteractionForm, JumpId,
    Kind, Label, ModelSpec, SubsystemSpec,
};
use crate::thermo::{analyze, ColumnGroups, ThermoTable};
use crate::{Error, Result};

/// Default dimensionless integrator step for dissipative propagation.
const DEFAULT_DISSIPATIVE_DT: f64 = 1e-3;

/// Complete description of one run: model, initial state, grid, outputs.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    pub model: ModelSpec,
    pub initial: InitialStateSpec,
    /// End time in the model's dimensionless unit (g*t, Gamma*t, lambda*t).
    pub t_max: f64,
    /// Number of grid intervals; the table has samples + 1 rows.
    pub samples: usize,
    /// Integrator step in the same dimensionless unit (dissipative models).
    pub dt: Option<f64>,
    pub outputs: ColumnGroups,
    pub out_path: Option<PathBuf>,
}

/// Structural families a config can describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    QubitOscillator,
    QubitQubit,
    DampedQubit,
    DampedPair,
}

impl Family {
    fn parse(s: &str) -> Option<Family> {
        match s {
            "qubit-oscillator" => Some(Family::QubitOscillator),
            "qubit-qubit" => Some(Family::QubitQubit),
            "damped-qubit" => Some(Family::DampedQubit),
            "damped-pair" => Some(Family::DampedPair),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::QubitOscillator => "qubit-oscillator",
            Family::QubitQubit => "qubit-qubit",
            Family::DampedQubit => "damped-qubit",
            Family::DampedPair => "damped-pair",
        }
    }
}

/// Family of a concrete model.
pub fn family_of(model: &ModelSpec) -> Family {
    match (model.subsystems.len(), &model.dissipator) {
        (1, _) => Family::DampedQubit,
        (_, Some(_)) => Family::DampedPair,
        (_, None) => match model.subsystems[1].kind {
            Kind::Oscillator => Family::QubitOscillator,
            Kind::Qubit => Family::QubitQubit,
        },
    }
}

/// Dimensionless time unit of a model: multiplier and axis name.
pub fn time_unit(model: &ModelSpec) -> (f64, &'static str) {
    match family_of(model) {
        Family::QubitOscillator | Family::QubitQubit => (model.coupling, "g*t"),
        Family::DampedPair => (model.coupling, "lambda*t"),
        Family::DampedQubit => (
            model.dissipator.as_ref().map(|d| d.rate).unwrap_or(0.0),
            "Gamma*t",
        ),
    }
}

fn exchange_model(second: SubsystemSpec, g: f64) -> ModelSpec {
    ModelSpec {
        subsystems: vec![SubsystemSpec::qubit(Label::A, 1.0), second],
        coupling: g,
        interaction_form: InteractionForm::ExcitationExchange,
        dissipator: None,
    }
}

fn base_config(model: ModelSpec, initial: Vec<InitialFactor>, t_max: f64) -> ScenarioConfig {
    ScenarioConfig {
        preset: None,
        model,
        initial: InitialStateSpec { factors: initial },
        t_max,
        samples: 400,
        dt: None,
        outputs: ColumnGroups {
            autonomous: true,
            standard: false,
            mca: false,
            info: true,
        },
        out_path: None,
    }
}

/// Starting config for a family, used when no preset is named.
pub fn family_default(family: Family) -> ScenarioConfig {
    match family {
        Family::QubitOscillator => base_config(
            exchange_model(SubsystemSpec::oscillator(Label::B, 1.0, 4), 0.01),
            vec![InitialFactor::Excited, InitialFactor::Ground],
            std::f64::consts::FRAC_PI_2,
        ),
        Family::QubitQubit => base_config(
            exchange_model(SubsystemSpec::qubit(Label::B, 1.0), 0.01),
            vec![InitialFactor::Excited, InitialFactor::Ground],
            std::f64::consts::FRAC_PI_2,
        ),
        Family::DampedQubit => {
            let mut cfg = base_config(
                ModelSpec {
                    subsystems: vec![SubsystemSpec::qubit(Label::A, 1.0)],
                    coupling: 0.0,
                    interaction_form: InteractionForm::ExcitationExchange,
                    dissipator: Some(Dissipator {
                        jump: JumpId::LoweringOnA,
                        rate: 0.01,
                    }),
                },
                vec![InitialFactor::Excited],
                5.0,
            );
            cfg.samples = 500;
            cfg.dt = Some(DEFAULT_DISSIPATIVE_DT);
            cfg.outputs = ColumnGroups {
                autonomous: true,
                standard: true,
                mca: false,
                info: false,
            };
            cfg
        }
        Family::DampedPair => {
            let mut cfg = base_config(
                ModelSpec {
                    subsystems: vec![
                        SubsystemSpec::qubit(Label::A, 1.0),
                        SubsystemSpec::oscillator(Label::B, 1.0, 4),
                    ],
                    coupling: 0.01,
                    interaction_form: InteractionForm::ExcitationExchange,
                    dissipator: Some(Dissipator {
                        jump: JumpId::LoweringOnB,
                        rate: 0.8 * 0.01,
                    }),
                },
                vec![InitialFactor::Excited, InitialFactor::Ground],
                50.0,
            );
            cfg.samples = 500;
            cfg.dt = Some(DEFAULT_DISSIPATIVE_DT);
            cfg
        }
    }
}

/// Preset names with one-line descriptions, in catalog order.
pub fn preset_catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "jc-excited-vacuum",
            "excited qubit into a vacuum mode, g = 0.01, g*t in [0, pi/2]",
        ),
        (
            "jc-superposition-vacuum",
            "equal-superposition qubit into a vacuum mode, same window",
        ),
        (
            "jc-mixed-vacuum",
            "maximally mixed qubit with a vacuum mode (finite-temperature qubit side)",
        ),
        (
            "jc-coherent-drive",
            "ground qubit driven by a coherent mode, alpha = 30, g*t in [0, 0.5]",
        ),
        (
            "qq-excited-ground",
            "excited qubit exchanging with a ground-state qubit",
        ),
        (
            "qq-superposition-ground",
            "equal-superposition qubit exchanging with a ground-state qubit",
        ),
        (
            "se-lindblad",
            "spontaneously emitting qubit, Gamma = 0.01, Gamma*t in [0, 5]",
        ),
        (
            "se-rc",
            "excited qubit with a damped mode, kappa = 0.8 lambda, lambda*t in [0, 50]",
        ),
        (
            "jc-excited-vacuum-full",
            "jc-excited-vacuum over the full period g*t in [0, pi]",
        ),
        (
            "jc-superposition-vacuum-full",
            "jc-superposition-vacuum over the full period g*t in [0, pi]",
        ),
    ]
}

/// Default config of a named preset.
pub fn preset_config(name: &str) -> Result<ScenarioConfig> {
    let mut cfg = match name {
        "jc-excited-vacuum" => family_default(Family::QubitOscillator),
        "jc-excited-vacuum-full" => {
            let mut c = family_default(Family::QubitOscillator);
            c.t_max = std::f64::consts::PI;
            c.samples = 800;
            c
        }
        "jc-superposition-vacuum" => {
            let mut c = family_default(Family::QubitOscillator);
            c.initial.factors[0] = InitialFactor::EqualSuperposition;
            c
        }
        "jc-superposition-vacuum-full" => {
            let mut c = family_default(Family::QubitOscillator);
            c.initial.factors[0] = InitialFactor::EqualSuperposition;
            c.t_max = std::f64::consts::PI;
            c.samples = 800;
            c
        }
        "jc-mixed-vacuum" => {
            let mut c = family_default(Family::QubitOscillator);
            c.initial.factors[0] = InitialFactor::MaximallyMixed;
            c.model.subsystems[1].truncation = 6;
            c
        }
        "jc-coherent-drive" => {
            let mut c = family_default(Family::QubitOscillator);
            let alpha = 30.0;
            c.initial.factors = vec![InitialFactor::Ground, InitialFactor::Coherent(alpha)];
            c.model.subsystems[1].truncation = default_coherent_levels(alpha);
            c.t_max = 0.5;
            c.samples = 2000;
            c.outputs = ColumnGroups::default();
            c
        }
        "qq-excited-ground" => family_default(Family::QubitQubit),
        "qq-superposition-ground" => {
            let mut c = family_default(Family::QubitQubit);
            c.initial.factors[0] = InitialFactor::EqualSuperposition;
            c
        }
        "se-lindblad" => family_default(Family::DampedQubit),
        "se-rc" => family_default(Family::DampedPair),
        other => return Err(Error::UnknownPreset(other.into())),
    };
    cfg.preset = Some(name.into());
    Ok(cfg)
}

fn validate_config(cfg: &ScenarioConfig) -> Result<()> {
    cfg.model.validate()?;
    if cfg.samples < 3 {
        return Err(Error::BadSpec(format!(
            "samples must be at least 3, got {}",
            cfg.samples
        )));
    }
    if !(cfg.t_max > 0.0) {
        return Err(Error::BadSpec(format!(
            "t_max must be positive, got {}",
            cfg.t_max
        )));
    }
    if let Some(dt) = cfg.dt {
        if !(dt > 0.0) {
            return Err(Error::BadSpec(format!("dt must be positive, got {dt}")));
        }
    }
    let (scale, _) = time_unit(&cfg.model);
    if !(scale > 0.0) {
        return Err(Error::BadSpec(
            "model has no positive rate to set the time unit (coupling or decay)".into(),
        ));
    }
    Ok(())
}

/// Propagate one configured scenario without analyzing it.
pub fn scenario_trajectory(cfg: &ScenarioConfig) -> Result<Trajectory> {
    validate_config(cfg)?;
    let (scale, _) = time_unit(&cfg.model);
    let times = time_grid(cfg.t_max / scale, cfg.samples)?;
    let state0 = make_initial_state(&cfg.initial, &cfg.model)?;
    let dt_raw = cfg.dt.unwrap_or(DEFAULT_DISSIPATIVE_DT) / scale;

    let mut traj: Trajectory = match family_of(&cfg.model) {
        Family::QubitOscillator => {
            if state0.is_pure() {
                propagate_jc_blocks(&cfg.model, &state0, &times)?
            } else {
                let (_, _, _, h) = build_jc(&cfg.model)?;
                propagate_unitary(&h, &state0, &times)?
            }
        }
        Family::QubitQubit => {
            let (_, _, _, h) = build_qubit_qubit(&cfg.model)?;
            propagate_unitary(&h, &state0, &times)?
        }
        Family::DampedQubit => {
            let (h, jumps) = build_spontaneous_emission(&cfg.model)?;
            propagate_lindblad(&h, &jumps, &state0, &times, dt_raw)?
        }
        Family::DampedPair => {
            let (h, jumps) = build_rc(&cfg.model)?;
            propagate_lindblad(&h, &jumps, &state0, &times, dt_raw)?
        }
    };
    traj.model = Some(cfg.model.clone());
    Ok(traj)
}

/// Propagate and analyze one configured scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ThermoTable> {
    let traj = scenario_trajectory(cfg)?;
    let (scale, axis) = time_unit(&cfg.model);
    let mut table = analyze(&traj)?;
    table.provenance.label = cfg.preset.clone();
    table.provenance.time_scale = scale;
    table.provenance.time_axis = axis.into();
    table.provenance.columns = cfg.outputs;
    Ok(table)
}

/// One CSV number: 12 significant digits, `inf` sentinel, no negative zero.
fn fmt_val(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

/// Column headers of a table, in emission order.
pub fn csv_header(table: &ThermoTable) -> Vec<String> {
    let cols = table.provenance.columns;
    let bipartite = table.records.first().map(|r| r.b.is_some()).unwrap_or(false);
    let mut h = vec!["t".to_string()];
    let subsystem_block = |h: &mut Vec<String>, tag: &str| {
        for name in [
            "U", "Uth", "S", "beta", "Q", "W", "ergo", "exergy", "nonuni", "sigma",
        ] {
            h.push(format!("{name}_{tag}"));
        }
    };
    if cols.autonomous {
        subsystem_block(&mut h, "A");
        if bipartite {
            subsystem_block(&mut h, "B");
        }
    }
    if cols.info && bipartite {
        h.push("I_AB".into());
        h.push("E_int".into());
    }
    if cols.standard {
        h.push("W_st_A".into());
        h.push("Q_st_A".into());
    }
    if cols.mca {
        h.push("Wdot_MCA_A".into());
        h.push("Qdot_MCA_A".into());
    }
    h
}

fn metadata_line(table: &ThermoTable) -> String {
    let p = &table.provenance;
    let mut line = String::from("# ");
    match &p.label {
        Some(name) => {
            let _ = write!(line, "preset={name}");
        }
        None => {
            let _ = write!(line, "preset=none");
        }
    }
    let _ = write!(line, " family={}", family_of(&p.model).name());
    for s in &p.model.subsystems {
        let tag = match s.label {
            Label::A => "A",
            Label::B => "B",
        };
        match s.kind {
            Kind::Qubit => {
                let _ = write!(line, " omega_{tag}={}", s.frequency);
            }
            Kind::Oscillator => {
                let _ = write!(
                    line,
                    " omega_{tag}={} levels_{tag}={}",
                    s.frequency, s.truncation
                );
            }
        }
    }
    if p.model.subsystems.len() == 2 {
        let _ = write!(line, " g={}", p.model.coupling);
    }
    if let Some(d) = &p.model.dissipator {
        let _ = write!(line, " decay_rate={}", d.rate);
    }
    let _ = write!(
        line,
        " samples={} t_unit={} energy_unit=hbar*omega_A",
        p.samples, p.time_axis
    );
    line
}

/// Render a table to CSV: one '#' metadata line, a header line, one row per
/// sample. Deterministic for a fixed table.
pub fn render_csv(table: &ThermoTable) -> String {
    let cols = table.provenance.columns;
    let mut out = String::new();
    out.push_str(&metadata_line(table));
    out.push('\n');
    out.push_str(&csv_header(table).join(","));
    out.push('\n');
    let scale = table.provenance.time_scale;
    for rec in &table.records {
        let mut fields: Vec<String> = vec![fmt_val(rec.time * scale)];
        if cols.autonomous {
            for led in std::iter::once(&rec.a).chain(rec.b.as_ref()) {
                for v in [
                    led.internal_energy,
                    led.thermal_energy,
                    led.entropy,
                    led.beta,
                    led.heat,
                    led.work,
                    led.ergotropy,
                    led.exergy,
                    led.nonunitary_term,
                    led.sigma,
                ] {
                    fields.push(fmt_val(v));
                }
            }
        }
        if cols.info && rec.b.is_some() {
            fields.push(fmt_val(rec.mutual_information));
            fields.push(fmt_val(rec.interaction_energy));
        }
        if cols.standard {
            fields.push(fmt_val(rec.comparator_a.standard_work));
            fields.push(fmt_val(rec.comparator_a.standard_heat));
        }
        if cols.mca {
            fields.push(fmt_val(rec.comparator_a.mca_work_rate));
            fields.push(fmt_val(rec.comparator_a.mca_heat_rate));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Write the CSV for a table.
pub fn emit_csv(table: &ThermoTable, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(table))?;
    Ok(())
}

/// Companion gnuplot script plotting the main energy ledger from a CSV.
pub fn render_gnuplot(table: &ThermoTable, csv_name: &str) -> String {
    let header = csv_header(table);
    let col = |name: &str| header.iter().position(|h| h == name).map(|i| i + 1);
    let mut series: Vec<(usize, &str)> = Vec::new();
    for name in ["Q_A", "W_A", "Q_B", "W_B", "W_st_A", "Q_st_A"] {
        if let Some(ix) = col(name) {
            series.push((ix, name));
        }
    }
    let title = table
        .provenance
        .label
        .clone()
        .unwrap_or_else(|| "scenario".into());
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{}'\n", table.provenance.time_axis));
    s.push_str("set ylabel 'energy [hbar*omega_A]'\n");
    s.push_str("set key outside\n");
    let plots: Vec<String> = series
        .iter()
        .map(|(ix, name)| format!("'{csv_name}' using 1:{ix} with lines title '{name}'"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

/// Write the gnuplot companion script next to a CSV.
pub fn emit_gnuplot(table: &ThermoTable, csv_path: &Path, script_path: &Path) -> Result<()> {
    let csv_name = csv_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| csv_path.display().to_string());
    std::fs::write(script_path, render_gnuplot(table, &csv_name))?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ParseError {
        line,
        message: message.into(),
    }
}

fn parse_real(line: usize, key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| parse_err(line, format!("invalid real for {key}: {value}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value for {key}: {value}")));
    }
    Ok(v)
}

fn parse_positive(line: usize, key: &str, value: &str) -> Result<f64> {
    let v = parse_real(line, key, value)?;
    if !(v > 0.0) {
        return Err(parse_err(line, format!("{key} must be positive, got {value}")));
    }
    Ok(v)
}

fn parse_count(line: usize, key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("invalid integer for {key}: {value}")))
}

fn parse_factor(line: usize, key: &str, value: &str) -> Result<InitialFactor> {
    if let Some(rest) = value.strip_prefix("fock:") {
        return Ok(InitialFactor::Fock(parse_count(line, key, rest)?));
    }
    if let Some(rest) = value.strip_prefix("coherent:") {
        return Ok(InitialFactor::Coherent(parse_real(line, key, rest)?));
    }
    if let Some(rest) = value.strip_prefix("gibbs:") {
        return Ok(InitialFactor::Gibbs(parse_positive(line, key, rest)?));
    }
    match value {
        "ground" => Ok(InitialFactor::Ground),
        "excited" => Ok(InitialFactor::Excited),
        "plus" => Ok(InitialFactor::EqualSuperposition),
        "mixed" => Ok(InitialFactor::MaximallyMixed),
        other => Err(parse_err(
            line,
            format!("unknown initial state '{other}' for {key} (ground, excited, plus, mixed, fock:N, coherent:X, gibbs:B)"),
        )),
    }
}

fn parse_groups(line: usize, value: &str) -> Result<ColumnGroups> {
    let mut groups = ColumnGroups {
        autonomous: false,
        standard: false,
        mca: false,
        info: false,
    };
    for item in value.split(',') {
        match item.trim() {
            "autonomous" => groups.autonomous = true,
            "standard" => groups.standard = true,
            "mca" => groups.mca = true,
            "info" => groups.info = true,
            other => {
                return Err(parse_err(
                    line,
                    format!("unknown output group '{other}' (autonomous, standard, mca, info)"),
                ))
            }
        }
    }
    Ok(groups)
}

/// Parse the flat key=value config format ('#' comments, dotted keys,
/// strict keys). A `preset` key or a `model.family` key seeds the defaults;
/// every other key overrides one field.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(parse_err(line_no, format!("expected key=value, got '{line}'")));
        };
        let key = k.trim().to_string();
        let value = v.trim().to_string();
        if key.is_empty() {
            return Err(parse_err(line_no, "empty key"));
        }
        if value.is_empty() {
            return Err(parse_err(line_no, format!("empty value for {key}")));
        }
        if !seen.insert(key.clone()) {
            return Err(parse_err(line_no, format!("duplicate key {key}")));
        }
        pairs.push((line_no, key, value));
    }

    let preset = pairs.iter().find(|(_, k, _)| k == "preset").cloned();
    let family_key = pairs.iter().find(|(_, k, _)| k == "model.family").cloned();
    let mut cfg = match (&preset, &family_key) {
        (Some((_, _, name)), _) => preset_config(name)?,
        (None, Some((line, _, value))) => {
            let family = Family::parse(value)
                .ok_or_else(|| parse_err(*line, format!("unknown model.family '{value}'")))?;
            family_default(family)
        }
        (None, None) => {
            return Err(parse_err(
                1,
                "config needs a 'preset' or a 'model.family' line",
            ))
        }
    };

    let mut alpha: Option<f64> = None;
    let mut kappa_over_lambda: Option<(usize, f64)> = None;
    let mut explicit_levels = false;
    let mut explicit_initial_b = false;

    for (line, key, value) in &pairs {
        let line = *line;
        match key.as_str() {
            "preset" | "model.family" => {}
            "model.g" => {
                if cfg.model.subsystems.len() != 2 {
                    return Err(parse_err(line, "model.g needs a two-subsystem model"));
                }
                cfg.model.coupling = parse_positive(line, key, value)?;
            }
            "model.omega_a" => {
                cfg.model.subsystems[0].frequency = parse_positive(line, key, value)?;
            }
            "model.omega_b" => {
                if cfg.model.subsystems.len() != 2 {
                    return Err(parse_err(line, "model.omega_b needs a two-subsystem model"));
                }
                cfg.model.subsystems[1].frequency = parse_positive(line, key, value)?;
            }
            "model.levels" => {
                let sub = cfg
                    .model
                    .subsystems
                    .get_mut(1)
                    .filter(|s| s.kind == Kind::Oscillator)
                    .ok_or_else(|| parse_err(line, "model.levels needs an oscillator"))?;
                let n = parse_count(line, key, value)?;
                if n < 2 {
                    return Err(parse_err(line, "model.levels must be at least 2"));
                }
                sub.truncation = n;
                explicit_levels = true;
            }
            "model.gamma" => {
                if family_of(&cfg.model) != Family::DampedQubit {
                    return Err(parse_err(line, "model.gamma applies to damped-qubit models"));
                }
                let rate = parse_positive(line, key, value)?;
                cfg.model.dissipator = Some(Dissipator {
                    jump: JumpId::LoweringOnA,
                    rate,
                });
            }
            "model.kappa_over_lambda" => {
                if family_of(&cfg.model) != Family::DampedPair {
                    return Err(parse_err(
                        line,
                        "model.kappa_over_lambda applies to damped-pair models",
                    ));
                }
                kappa_over_lambda = Some((line, parse_positive(line, key, value)?));
            }
            "model.alpha" => {
                if cfg
                    .model
                    .subsystems
                    .get(1)
                    .map(|s| s.kind != Kind::Oscillator)
                    .unwrap_or(true)
                {
                    return Err(parse_err(line, "model.alpha needs an oscillator"));
                }
                alpha = Some(parse_positive(line, key, value)?);
            }
            "initial.A" => {
                cfg.initial.factors[0] = parse_factor(line, key, value)?;
            }
            "initial.B" => {
                if cfg.initial.factors.len() != 2 {
                    return Err(parse_err(line, "initial.B needs a two-subsystem model"));
                }
                cfg.initial.factors[1] = parse_factor(line, key, value)?;
                explicit_initial_b = true;
            }
            "t_max" => {
                cfg.t_max = parse_positive(line, key, value)?;
            }
            "samples" => {
                cfg.samples = parse_count(line, key, value)?;
            }
            "dt" => {
                cfg.dt = Some(parse_positive(line, key, value)?);
            }
            "out" => {
                cfg.out_path = Some(PathBuf::from(value));
            }
            "output.groups" => {
                cfg.outputs = parse_groups(line, value)?;
            }
            other => {
                return Err(Error::UnknownKey {
                    line,
                    key: other.into(),
                })
            }
        }
    }

    if let Some(a) = alpha {
        if !explicit_initial_b {
            cfg.initial.factors[1] = InitialFactor::Coherent(a);
        }
        if !explicit_levels {
            cfg.model.subsystems[1].truncation = default_coherent_levels(a);
        }
    }
    if let Some((_, k)) = kappa_over_lambda {
        cfg.model.dissipator = Some(Dissipator {
            jump: JumpId::LoweringOnB,
            rate: k * cfg.model.coupling,
        });
    }
    Ok(cfg)
}
