//! Batch pipeline driver: each subcommand reads the previous stage's
//! artifact, writes its own (MATPOWER case + JSON sidecar, or plain JSON
//! for solutions), and prints a line-oriented key=value summary. Exit
//! codes: 0 success, 1 domain error, 2 usage error.

mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use config::PipelineConfig;
use gridsmith::diagnosis::{diagnose, compare_solutions, DiagnosisTolerances};
use gridsmith::genclass::{
    assign_costs, classify, fuel_mix_report, load_reference_csv, train_state_forests,
    BasslinkSpec, ClassifyOptions, ForestParams,
};
use gridsmith::ingest::{load_tables, to_network, RawTables};
use gridsmith::netmodel::FuelCategory;
use gridsmith::opf::{ac_opf, dc_opf, AcOpfOptions, DcOpfOptions, OpfResult, OpfStatus};
use gridsmith::pf::{ac_pf, dc_pf, PfOptions, PfSolution};
use gridsmith::reduce::{reduce, ReductionConfig};
use gridsmith::sidecar::{read_stage, write_stage};
use gridsmith::thermal::{
    apply_limits, count_violations, filter_reference, fit_loglog, repair_violations,
    scatter_points, FilterParams, LimitConfig, ThermalFit,
};

#[derive(Parser)]
#[command(name = "gridsmith", version, about = "Grid benchmark model construction pipeline")]
struct Cli {
    /// Config file (TOML); defaults to $GRIDSMITH_CONFIG or ./gridsmith.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PfMethod {
    Ac,
    Dc,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the relational CSV tables into a raw-tables artifact.
    Ingest {
        /// Directory holding buses.csv, lines.csv, transformers2w.csv, ...
        #[arg(long)]
        tables_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert raw tables to a per-unit network model (transformer
    /// equivalencing, per-unit conversion, interconnector flags).
    Equivalence {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        base_mva: Option<f64>,
    },
    /// Remove ideal lines/breakers and join degree-2 chains.
    Reduce {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        z_small: Option<f64>,
        #[arg(long)]
        b_small: Option<f64>,
        #[arg(long)]
        xr_high: Option<f64>,
        /// Also write the removal/join log as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fit the log-log thermal model on reference line data.
    FitLimits {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        xr_max: Option<f64>,
        #[arg(long)]
        norm_rate_min: Option<f64>,
        /// Dump the filtered (x/r, rate/v) scatter for plotting.
        #[arg(long)]
        points_csv: Option<PathBuf>,
    },
    /// Rate every branch from the fitted statistical model and the upper
    /// bound, clamp transformers, then repair power-flow violations.
    ApplyLimits {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit JSON from fit-limits; alternatively pin --a and --k.
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
        #[arg(long)]
        theta_delta_deg: Option<f64>,
        #[arg(long)]
        xfmr_min_mva: Option<f64>,
        #[arg(long)]
        xfmr_max_mva: Option<f64>,
        #[arg(long)]
        repair_margin: Option<f64>,
        /// Skip the power-flow violation repair pass.
        #[arg(long)]
        no_repair: bool,
    },
    /// Assign fuel categories: per-state forests for synchronous units,
    /// solar for network sources, special-cased HVDC endpoints.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_trees: Option<usize>,
        #[arg(long)]
        smote_k: Option<usize>,
        #[arg(long)]
        basslink_mainland_gen: Option<usize>,
        #[arg(long)]
        basslink_tasmania_gen: Option<usize>,
        /// Side-by-side fuel mix report against the reference list.
        #[arg(long)]
        mix_csv: Option<PathBuf>,
    },
    /// Attach per-category cost and operational parameters.
    AssignCosts {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a power flow and write the solution report.
    Pf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "ac")]
        method: PfMethod,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// DC optimal power flow.
    DcOpf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        slack: bool,
    },
    /// AC optimal power flow.
    AcOpf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        slack: bool,
    },
    /// Staged feasibility diagnosis with slack localization.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delta report between two power-flow solution files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the final plain MATPOWER case.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_model(path: &PathBuf) -> anyhow::Result<(gridsmith::NetworkModel, gridsmith::sidecar::Sidecar)> {
    read_stage(path).with_context(|| format!("reading model {}", path.display()))
}

fn pf_options(cfg: &PipelineConfig, tol: Option<f64>) -> PfOptions {
    let defaults = PfOptions::default();
    PfOptions {
        tol: tol.or(cfg.pf.tol).unwrap_or(defaults.tol),
        max_iter: cfg.pf.max_iter.unwrap_or(defaults.max_iter),
        enforce_q_limits: cfg.pf.enforce_q_limits.unwrap_or(defaults.enforce_q_limits),
        flat_start: cfg.pf.flat_start.unwrap_or(defaults.flat_start),
    }
}

fn print_opf_summary(stage: &str, r: &OpfResult) {
    println!("stage={stage}");
    let status = match r.status {
        OpfStatus::Optimal => "optimal",
        OpfStatus::Infeasible => "infeasible",
        OpfStatus::IterLimit => "iter_limit",
    };
    println!("status={status}");
    println!("objective={:.6}", r.objective);
    println!("dispatch_cost={:.6}", r.dispatch_cost);
    println!("iterations={}", r.iterations);
    println!("kkt_error={:.3e}", r.kkt_error);
    println!("solve_seconds={:.3}", r.solve_seconds);
    println!("binding_constraints={}", r.binding.len());
    if !r.slack_p.is_empty() {
        println!("total_slack={:.6e}", r.total_slack());
        if let Some((bus, slack)) = r.worst_slack_bus() {
            println!("worst_slack_bus={bus}");
            println!("worst_slack={slack:.6e}");
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;

    match cli.command {
        Command::Ingest { tables_dir, out } => {
            let tables = load_tables(&tables_dir)?;
            write_json(&out, &tables)?;
            println!("stage=ingest");
            println!("buses={}", tables.buses.len());
            println!("lines={}", tables.lines.len());
            println!("transformers2w={}", tables.xfmr2w.len());
            println!("transformers3w={}", tables.xfmr3w.len());
            println!("generators={}", tables.gens.len());
            println!("loads={}", tables.loads.len());
            println!("shunts={}", tables.shunts.len());
        }

        Command::Equivalence {
            tables,
            out,
            base_mva,
        } => {
            let text = std::fs::read_to_string(&tables)
                .with_context(|| format!("reading {}", tables.display()))?;
            let raw: RawTables = serde_json::from_str(&text)?;
            let model = to_network(&raw, cfg.base_mva(base_mva))?;
            model.validate().map_err(anyhow::Error::from)?;
            write_stage(&out, &model, None)?;
            println!("stage=equivalence");
            println!("buses={}", model.buses.len());
            println!("branches={}", model.branches.len());
            println!(
                "transformers={}",
                model.branches.values().filter(|b| b.is_transformer).count()
            );
            println!(
                "interconnectors={}",
                model.branches.values().filter(|b| b.interconnector).count()
            );
            println!("generators={}", model.gens.len());
        }

        Command::Reduce {
            input,
            out,
            z_small,
            b_small,
            xr_high,
            log,
        } => {
            let (model, sidecar) = read_model(&input)?;
            let defaults = ReductionConfig::default();
            let rcfg = ReductionConfig {
                z_small: z_small.or(cfg.reduction.z_small).unwrap_or(defaults.z_small),
                b_small: b_small.or(cfg.reduction.b_small).unwrap_or(defaults.b_small),
                xr_high: xr_high.or(cfg.reduction.xr_high).unwrap_or(defaults.xr_high),
            };
            let (reduced, rlog) = reduce(&model, &rcfg);
            write_stage(&out, &reduced, sidecar.thermal_fit.as_ref())?;
            if let Some(log_path) = log {
                write_json(&log_path, &rlog)?;
            }
            println!("stage=reduce");
            println!("buses_before={}", model.buses.len());
            println!("buses_after={}", reduced.buses.len());
            println!("branches_before={}", model.branches.len());
            println!("branches_after={}", reduced.branches.len());
            println!("removals={}", rlog.removals.len());
            println!("joins={}", rlog.joins.len());
        }

        Command::FitLimits {
            reference,
            out,
            xr_max,
            norm_rate_min,
            points_csv,
        } => {
            let path = reference
                .or(cfg.thermal.reference_csv.clone())
                .context("no thermal reference csv (flag --reference or [thermal].reference_csv)")?;
            let defaults = FilterParams::default();
            let params = FilterParams {
                xr_max: xr_max.or(cfg.thermal.xr_max).unwrap_or(defaults.xr_max),
                norm_rate_min: norm_rate_min
                    .or(cfg.thermal.norm_rate_min)
                    .unwrap_or(defaults.norm_rate_min),
            };
            let lines = gridsmith::thermal::load_reference_csv(&path)?;
            let kept = filter_reference(&lines, &params);
            let fit = fit_loglog(&kept, &params)?;
            write_json(&out, &fit)?;
            if let Some(points) = points_csv {
                let mut text = String::from("xr,norm_rate\n");
                for (x, y) in scatter_points(&kept) {
                    text.push_str(&format!("{x},{y}\n"));
                }
                std::fs::write(&points, text)?;
            }
            println!("stage=fit-limits");
            println!("points_total={}", lines.len());
            println!("points_kept={}", kept.len());
            println!("a={:.6}", fit.a);
            println!("k={:.6}", fit.k);
            println!("r_squared={:.6}", fit.r_squared);
        }

        Command::ApplyLimits {
            input,
            out,
            fit,
            a,
            k,
            theta_delta_deg,
            xfmr_min_mva,
            xfmr_max_mva,
            repair_margin,
            no_repair,
        } => {
            let (model, _) = read_model(&input)?;
            let fit = match (fit, a.or(cfg.thermal.a), k.or(cfg.thermal.k)) {
                (Some(path), _, _) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading fit {}", path.display()))?;
                    serde_json::from_str::<ThermalFit>(&text)?
                }
                (None, Some(a), Some(k)) => ThermalFit::from_coefficients(a, k),
                _ => anyhow::bail!("need --fit FILE or both --a and --k"),
            };
            let defaults = LimitConfig::default();
            let limit_cfg = LimitConfig {
                theta_delta: theta_delta_deg
                    .or(cfg.thermal.theta_delta_deg)
                    .map(f64::to_radians)
                    .unwrap_or(defaults.theta_delta),
                xfmr_min_mva: xfmr_min_mva
                    .or(cfg.thermal.xfmr_min_mva)
                    .unwrap_or(defaults.xfmr_min_mva),
                xfmr_max_mva: xfmr_max_mva
                    .or(cfg.thermal.xfmr_max_mva)
                    .unwrap_or(defaults.xfmr_max_mva),
            };
            let rated = apply_limits(&model, &fit, &limit_cfg);
            println!("stage=apply-limits");
            println!(
                "rated_branches={}",
                rated.in_service_branches().filter(|b| b.rate_a > 0.0).count()
            );

            let final_model = if no_repair {
                rated
            } else {
                let sol = ac_pf(&rated, &pf_options(&cfg, None))?;
                let margin = repair_margin
                    .or(cfg.thermal.repair_margin)
                    .unwrap_or(1.1);
                let before = count_violations(&rated, &sol);
                let (repaired, rlog) = repair_violations(&rated, &sol, margin)?;
                println!("violations_before={before}");
                println!("repaired={}", rlog.len());
                println!("violations_after={}", count_violations(&repaired, &sol));
                repaired
            };
            write_stage(&out, &final_model, Some(&fit))?;
        }

        Command::Classify {
            input,
            out,
            reference,
            seed,
            n_trees,
            smote_k,
            basslink_mainland_gen,
            basslink_tasmania_gen,
            mix_csv,
        } => {
            let (model, sidecar) = read_model(&input)?;
            let path = reference
                .or(cfg.classify.reference_csv.clone())
                .context("no generator reference csv (flag --reference or [classify].reference_csv)")?;
            let refs = load_reference_csv(&path)?;
            let params = ForestParams {
                n_trees: n_trees
                    .or(cfg.classify.n_trees)
                    .unwrap_or(ForestParams::default().n_trees),
                ..Default::default()
            };
            let smote_k = smote_k.or(cfg.classify.smote_k).unwrap_or(5);
            let seed = cfg.seed(seed);
            let forests = train_state_forests(&refs, &params, smote_k, seed)?;

            let mainland = basslink_mainland_gen.or(cfg.classify.basslink_mainland_gen);
            let tasmania = basslink_tasmania_gen.or(cfg.classify.basslink_tasmania_gen);
            let opts = ClassifyOptions {
                basslink: match (mainland, tasmania) {
                    (Some(m), Some(t)) => Some(BasslinkSpec {
                        mainland_gen: m,
                        tasmania_gen: t,
                    }),
                    _ => None,
                },
                var_compensator_filter: cfg.classify.var_compensator_filter.unwrap_or(false),
            };
            let (classified, log) = classify(&model, &forests, &opts)?;
            write_stage(&out, &classified, sidecar.thermal_fit.as_ref())?;
            if let Some(mix) = mix_csv {
                std::fs::write(&mix, fuel_mix_report(&classified, &refs).to_csv())?;
            }
            println!("stage=classify");
            println!("seed={seed}");
            let mut counts: BTreeMap<FuelCategory, usize> = BTreeMap::new();
            for g in classified.gens.values() {
                if let Some(fuel) = g.fuel {
                    *counts.entry(fuel).or_default() += 1;
                }
            }
            for (fuel, count) in counts {
                println!("fuel_{}={count}", fuel.name());
            }
            if !log.var_compensators.is_empty() {
                println!("var_compensators={}", log.var_compensators.len());
            }
        }

        Command::AssignCosts { input, out } => {
            let (model, sidecar) = read_model(&input)?;
            let costed = assign_costs(&model)?;
            write_stage(&out, &costed, sidecar.thermal_fit.as_ref())?;
            println!("stage=assign-costs");
            println!(
                "gens_with_costs={}",
                costed.gens.values().filter(|g| g.cost.is_some()).count()
            );
        }

        Command::Pf {
            input,
            method,
            out,
            tol,
        } => {
            let (model, _) = read_model(&input)?;
            let sol = match method {
                PfMethod::Ac => ac_pf(&model, &pf_options(&cfg, tol))?,
                PfMethod::Dc => dc_pf(&model)?,
            };
            write_json(&out, &sol)?;
            println!("stage=pf");
            println!(
                "method={}",
                match method {
                    PfMethod::Ac => "ac",
                    PfMethod::Dc => "dc",
                }
            );
            println!("converged={}", sol.converged);
            println!("iterations={}", sol.iterations);
            println!("max_mismatch={:.3e}", sol.max_mismatch);
            println!("losses_pu={:.6}", sol.total_losses());
        }

        Command::DcOpf { input, out, slack } => {
            let (model, _) = read_model(&input)?;
            let r = dc_opf(
                &model,
                &DcOpfOptions {
                    slack,
                    penalty: cfg.opf.penalty,
                    tol: cfg.opf.tol.unwrap_or(1e-6),
                    max_iter: cfg.opf.max_iter.unwrap_or(300),
                },
            )?;
            if let Some(out) = out {
                write_json(&out, &r)?;
            }
            print_opf_summary("dc-opf", &r);
        }

        Command::AcOpf { input, out, slack } => {
            let (model, _) = read_model(&input)?;
            let r = ac_opf(
                &model,
                &AcOpfOptions {
                    slack,
                    penalty: cfg.opf.penalty,
                    tol: cfg.opf.tol.unwrap_or(1e-6),
                    max_iter: cfg.opf.max_iter.unwrap_or(400),
                    ..Default::default()
                },
            )?;
            if let Some(out) = out {
                write_json(&out, &r)?;
            }
            print_opf_summary("ac-opf", &r);
        }

        Command::Diagnose { input, out } => {
            let (model, _) = read_model(&input)?;
            let defaults = DiagnosisTolerances::default();
            let tolerances = DiagnosisTolerances {
                opf_slack: cfg.diagnosis.opf_slack_tol.unwrap_or(defaults.opf_slack),
                pf_mismatch: cfg
                    .diagnosis
                    .pf_mismatch_tol
                    .unwrap_or(defaults.pf_mismatch),
            };
            let report = diagnose(&model, &tolerances)?;
            if let Some(out) = out {
                std::fs::write(&out, format!("{report}"))?;
            }
            println!("stage=diagnose");
            println!("verdict={:?}", report.verdict);
            for stage in &report.stages {
                println!(
                    "stage_{}_max_slack={:.6e}",
                    stage.name.replace('-', "_"),
                    stage.max_slack
                );
            }
            if let Some(worst) = report
                .stages
                .iter()
                .flat_map(|s| s.offenders.first())
                .max_by(|a, b| a.slack.abs().total_cmp(&b.slack.abs()))
            {
                println!("worst_offender_id={}", worst.id);
                println!("worst_offender_slack={:.6e}", worst.slack);
            }
        }

        Command::Compare { a, b, out } => {
            let read_sol = |p: &PathBuf| -> anyhow::Result<PfSolution> {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading solution {}", p.display()))?;
                Ok(serde_json::from_str(&text)?)
            };
            let delta = compare_solutions(&read_sol(&a)?, &read_sol(&b)?)?;
            if let Some(out) = out {
                write_json(&out, &delta)?;
            }
            println!("stage=compare");
            println!("max_dvm={:.6e}", delta.max_dvm());
            println!("mean_dvm={:.6e}", delta.mean_dvm());
            println!("max_dva_deg={:.6e}", delta.max_dva().to_degrees());
            println!("mean_dva_deg={:.6e}", delta.mean_dva().to_degrees());
            println!("max_dpg={:.6e}", delta.max_dpg());
            println!("max_dqg={:.6e}", delta.max_dqg());
        }

        Command::Export { input, out } => {
            let (model, _) = read_model(&input)?;
            std::fs::write(&out, gridsmith::matpower::write_matpower(&model))?;
            println!("stage=export");
            println!("out={}", out.display());
            println!("buses={}", model.buses.len());
        }
    }
    Ok(())
}
