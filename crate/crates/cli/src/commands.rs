// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use blade_dlt_core::analysis::{
    error_bounds_for, inject_fault, monte_carlo_sweep, write_sweep_csv, FaultSpec, TesterModel,
};
use blade_dlt_core::area::{area_report, CellLibrary};
use blade_dlt_core::orchestrator::{judge, Orchestrator, SimulatedDevice, Verdict};
use blade_dlt_core::sim::write_vcd;

use crate::config::Config;
use crate::report::ReportFile;
use crate::{CliError, EXIT_FAULT, EXIT_OK};

pub fn cmd_validate(config: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = Config::load(config)?;
    let pipeline = config.pipeline()?;
    config.parasitics_for(&pipeline)?;
    config.timing_spec(pipeline.clone())?;
    let result = pipeline.validate();
    for w in &result.warnings {
        writeln!(out, "warning: {w}")?;
    }
    writeln!(
        out,
        "ok: {} stages, {} warning(s)",
        pipeline.len(),
        result.warnings.len()
    )?;
    Ok(EXIT_OK)
}

pub struct ExtractArgs {
    pub config: PathBuf,
    pub output: PathBuf,
    pub vcd: Option<PathBuf>,
    pub faults: Vec<String>,
    /// Overrides the config seed.
    pub seed: Option<u64>,
}

pub fn cmd_extract(args: &ExtractArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = Config::load(&args.config)?;
    let nominal = config.pipeline()?;
    let spec = config.timing_spec(nominal.clone())?;
    let parasitics = config.parasitics_for(&nominal)?;
    let seed = args.seed.unwrap_or(config.seed);

    let faults: Vec<FaultSpec> = args
        .faults
        .iter()
        .map(|f| f.parse().map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    let mut actual = nominal.clone();
    for f in &faults {
        actual = inject_fault(&actual, f)?;
    }
    let device = SimulatedDevice::with_parasitics(actual.clone(), parasitics)?;

    let tester = config.tester;
    let mut orchestrator = Orchestrator::new(&device).with_tester(tester);
    if !tester.ideal {
        orchestrator = orchestrator.with_seeded_phase(seed);
    }
    if args.vcd.is_some() {
        orchestrator = orchestrator.recording();
    }
    let extraction = orchestrator.extract_all();
    let runs = orchestrator.into_runs();

    let error_bounds = (!tester.ideal).then(|| {
        let ideal = Orchestrator::new(&device).extract_all();
        error_bounds_for(&ideal, &tester)
    });
    let verdicts = judge(&extraction, &spec);
    let report = ReportFile {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seed,
        faults: faults.iter().map(ToString::to_string).collect(),
        warnings: extraction
            .warnings
            .iter()
            .map(ToString::to_string)
            .collect(),
        extraction,
        verdicts,
        error_bounds,
    };
    fs::write(&args.output, report.to_json())?;

    if let Some(dir) = &args.vcd {
        fs::create_dir_all(dir)?;
        for run in &runs {
            let file = fs::File::create(dir.join(format!("{}.vcd", run.label)))?;
            write_vcd(std::io::BufWriter::new(file), &run.trace, &actual)?;
        }
    }

    print_summary(&report, out)?;
    Ok(if report.has_fault() {
        EXIT_FAULT
    } else {
        EXIT_OK
    })
}

fn print_summary(report: &ReportFile, out: &mut dyn Write) -> std::io::Result<()> {
    let fmt_opt = |v: Option<i64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
    writeln!(
        out,
        "T_Sum {} ps, residual {} ps",
        fmt_opt(report.extraction.t_sum),
        fmt_opt(report.extraction.residual)
    )?;
    writeln!(
        out,
        "{:<16} {:>12} {:>12}  verdict",
        "line", "nominal_ps", "measured_ps"
    )?;
    for v in &report.verdicts {
        let verdict = match v.verdict {
            Verdict::Ok => "ok",
            Verdict::TooFast => "TOO FAST",
            Verdict::TooSlow => "TOO SLOW",
            Verdict::NotMeasured => "NOT MEASURED",
        };
        writeln!(
            out,
            "{:<16} {:>12} {:>12}  {verdict}",
            v.line.to_string(),
            v.nominal_ps,
            fmt_opt(v.measured_ps)
        )?;
    }
    for w in &report.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

/// `LO:HI[:STEP]` (inclusive, step defaults to 1) or `a,b,c`.
pub fn parse_resolutions(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--resolutions {spec:?}: {why}"));
    let num = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| bad("expected integers"))
    };
    let values: Vec<u64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let (lo, hi, step) = match parts[..] {
            [lo, hi] => (num(lo)?, num(hi)?, 1),
            [lo, hi, step] => (num(lo)?, num(hi)?, num(step)?),
            _ => return Err(bad("expected LO:HI[:STEP]")),
        };
        if step == 0 {
            return Err(bad("step must be positive"));
        }
        (lo..=hi).step_by(step as usize).collect()
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad("empty range"));
    }
    if values.contains(&0) {
        return Err(bad("resolutions must be positive"));
    }
    Ok(values)
}

pub fn cmd_sweep(
    config: &Path,
    resolutions: &str,
    trials: usize,
    output: &Path,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let resolutions = parse_resolutions(resolutions)?;
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let config = Config::load(config)?;
    let pipeline = config.pipeline()?;
    let parasitics = config.parasitics_for(&pipeline)?;
    let device = SimulatedDevice::with_parasitics(pipeline, parasitics)?;
    let seed = seed.unwrap_or(config.seed);

    let mut results = Vec::with_capacity(resolutions.len());
    for r in resolutions {
        let tester = TesterModel::new(r, config.tester.rounding)?;
        let result = monte_carlo_sweep(&device, &tester, trials, seed)?;
        writeln!(
            out,
            "r={r} ps: {} quantities, bounds {}",
            result.rows.len(),
            if result.all_within_bounds() {
                "hold"
            } else {
                "VIOLATED"
            }
        )?;
        results.push(result);
    }

    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &results).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    fs::write(output, buf)?;
    Ok(EXIT_OK)
}

pub fn cmd_area(n: u32, overrides: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    let mut lib = CellLibrary::default();
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--override {o:?}: expected KEY=VAL")))?;
        lib.set(key.trim(), value.trim()).map_err(CliError::Usage)?;
    }
    let report = area_report(n, &lib).map_err(|e| CliError::Usage(e.to_string()))?;
    write!(out, "{}", report.table())?;
    writeln!(
        out,
        "{}",
        serde_json::to_string(&report.rounded()).expect("area report serializes")
    )?;
    Ok(EXIT_OK)
}
