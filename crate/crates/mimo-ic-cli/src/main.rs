use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mimo_ic::alignment::{self, BuildOptions, Mode};
use mimo_ic::certifier::{self, GridOptions, DEFAULT_MASTER_SEED};
use mimo_ic::channel::{ChannelSet, Flavor};
use mimo_ic::cob;
use mimo_ic::dof_core::{self, fmt_rational, AntennaConfig, Branch, Rational};
use mimo_ic::linalg::DEFAULT_REL_TOL;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "mimo-ic", version, about = "Degrees of freedom and interference alignment for the 3-user MIMO interference channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed for channels, combiners and projections.
    #[arg(long, global = true, env = "MIMO_IC_SEED", default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    output: Output,

    /// Relative rank threshold.
    #[arg(long, global = true, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form DoF quantities for one antenna configuration.
    Dof { m_t: usize, m_r: usize },
    /// DoF value and its floor for every configuration up to MAX antennas.
    Table { max: usize },
    /// Build a beamforming scheme on a random channel and verify it.
    Construct {
        m_t: usize,
        m_r: usize,
        #[arg(long, default_value = "auto")]
        mode: String,
        #[arg(long, default_value = "constant")]
        flavor: String,
        /// Write the channel and solution as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Verify floor(DoF) streams per user on every cell up to MAX x MAX_N.
    Grid {
        max: usize,
        max_n: Option<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Which (m, n) cells need time-varying channels for the symbol extension scheme.
    Survey {
        max: usize,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Layered change of basis on a random (p, p+1) channel.
    Cob { p: usize },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<mimo_ic::Error> for Failure {
    fn from(e: mimo_ic::Error) -> Self {
        match e {
            mimo_ic::Error::InvalidConfig(_) | mimo_ic::Error::InvalidArgument(_) | mimo_ic::Error::Unsupported(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = validate(&cli).and_then(|()| run(&cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn validate(cli: &Cli) -> Result<(), Failure> {
    if !(cli.rel_tol > 0.0 && cli.rel_tol < 1.0) {
        return Err(Failure::Usage(format!("--rel-tol must lie in (0, 1), got {}", cli.rel_tol)));
    }
    let positive = |what: &str, v: usize| {
        if v == 0 {
            Err(Failure::Usage(format!("{what} must be positive")))
        } else {
            Ok(())
        }
    };
    match &cli.command {
        Command::Dof { m_t, m_r } | Command::Construct { m_t, m_r, .. } => {
            positive("m_t", *m_t)?;
            positive("m_r", *m_r)?;
        }
        Command::Table { max } | Command::Survey { max, .. } => positive("max", *max)?,
        Command::Grid { max, max_n, seeds, jobs, .. } => {
            positive("max", *max)?;
            positive("max_n", max_n.unwrap_or(*max))?;
            positive("--seeds", *seeds)?;
            positive("--jobs", jobs.unwrap_or(1))?;
        }
        Command::Cob { p } => {
            if *p < 2 || *p > cob::MAX_PATTERN_P {
                return Err(Failure::Usage(format!("p must lie in 2..={}, got {p}", cob::MAX_PATTERN_P)));
            }
        }
    }
    if let Command::Construct { mode, flavor, .. } = &cli.command {
        mode.parse::<Mode>()?;
        flavor.parse::<Flavor>()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Dof { m_t, m_r } => cmd_dof(cli, AntennaConfig::new(*m_t, *m_r)?),
        Command::Table { max } => cmd_table(cli, *max),
        Command::Construct { m_t, m_r, mode, flavor, dump } => cmd_construct(
            cli,
            AntennaConfig::new(*m_t, *m_r)?,
            mode.parse()?,
            flavor.parse()?,
            dump.as_ref(),
        ),
        Command::Grid { max, max_n, seeds, jobs, csv, json } => {
            let opts = GridOptions { master_seed: cli.seed, seeds_per_cell: *seeds, rel_tol: cli.rel_tol, jobs: *jobs };
            cmd_grid(cli, *max, max_n.unwrap_or(*max), &opts, csv.as_ref(), json.as_ref())
        }
        Command::Survey { max, seeds, jobs } => {
            let opts = GridOptions { master_seed: cli.seed, seeds_per_cell: *seeds, rel_tol: cli.rel_tol, jobs: *jobs };
            cmd_survey(cli, *max, &opts)
        }
        Command::Cob { p } => cmd_cob(cli, *p),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn opt_rational(r: Option<Rational>) -> String {
    r.map(|x| fmt_rational(&x)).unwrap_or_else(|| "-".into())
}

fn cmd_dof(cli: &Cli, cfg: AntennaConfig) -> Outcome {
    let c = dof_core::characterize(cfg);
    let proper = Rational::new((cfg.m_t() + cfg.m_r()) as i64, 4);
    match cli.output {
        Output::Json => print_json(&json!({
            "characterization": c,
            "dof_star": fmt_rational(&c.dof_star),
            "dof_floor": dof_core::dof_floor(cfg),
            "proper_threshold": fmt_rational(&proper),
        }))?,
        Output::Csv => {
            println!("m_t,m_r,kappa,m_bound,n_bound,dof_star,q,class,proper_threshold");
            println!(
                "{},{},{},{},{},{},{},{:?},{}",
                cfg.m_t(),
                cfg.m_r(),
                c.kappa,
                opt_rational(c.m_bound),
                opt_rational(c.n_bound),
                fmt_rational(&c.dof_star),
                c.scale_factor,
                c.redundancy,
                fmt_rational(&proper)
            );
        }
        Output::Text => {
            let segment = match c.segment {
                None => "-".to_string(),
                Some(s) => format!("p={}, {} branch", s.p, if s.branch == Branch::M { "M" } else { "N" }),
            };
            println!("config     {cfg}");
            println!("DoF*       {}", fmt_rational(&c.dof_star));
            println!("kappa      {}", c.kappa);
            println!("M-bound    {}", opt_rational(c.m_bound));
            println!("N-bound    {}", opt_rational(c.n_bound));
            println!("q          {}", c.scale_factor);
            println!("class      {:?}", c.redundancy);
            println!("segment    {segment}");
            println!("proper     d <= {}", fmt_rational(&proper));
        }
    }
    Ok(true)
}

fn cmd_table(cli: &Cli, max: usize) -> Outcome {
    let cells: Vec<(usize, usize, Rational)> = (1..=max)
        .flat_map(|t| (1..=max).map(move |r| (t, r)))
        .map(|(t, r)| (t, r, dof_core::dof_star(AntennaConfig::new(t, r).expect("positive"))))
        .collect();
    match cli.output {
        Output::Json => {
            let rows: Vec<_> = cells
                .iter()
                .map(|(t, r, d)| json!({"m_t": t, "m_r": r, "dof_star": fmt_rational(d), "dof_floor": d.floor().to_integer()}))
                .collect();
            print_json(&rows)?;
        }
        Output::Csv => {
            println!("m_t,m_r,dof_star,dof_floor");
            for (t, r, d) in &cells {
                println!("{t},{r},{},{}", fmt_rational(d), d.floor().to_integer());
            }
        }
        Output::Text => {
            let width = cells.iter().map(|(_, _, d)| fmt_rational(d).len()).max().unwrap_or(1).max(3);
            let mut out = format!("{:>5}", "t\\r");
            for r in 1..=max {
                let _ = write!(out, " {r:>width$}");
            }
            println!("{out}");
            for t in 1..=max {
                let mut line = format!("{t:>5}");
                for (_, _, d) in cells.iter().filter(|c| c.0 == t) {
                    let _ = write!(line, " {:>width$}", fmt_rational(d));
                }
                println!("{line}");
            }
        }
    }
    Ok(true)
}

fn cmd_construct(cli: &Cli, cfg: AntennaConfig, mode: Mode, flavor: Flavor, dump: Option<&PathBuf>) -> Outcome {
    let ch = ChannelSet::generate(cfg.m_t(), cfg.m_r(), flavor, cli.seed)?;
    let c = alignment::construct(&ch, mode, &BuildOptions { seed: cli.seed, rel_tol: cli.rel_tol })?;
    let report = certifier::verify_solution_with_tol(&c.channel, &c.solution, cli.rel_tol)?;
    let doc = json!({
        "config": cfg.to_string(),
        "pass": report.pass,
        "report": report,
        "channel": c.channel.to_json(),
        "solution": c.solution.to_json(),
    });
    if let Some(path) = dump {
        let text = serde_json::to_string(&doc).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(path, text)?;
    }
    let scheme = &c.solution.scheme;
    match cli.output {
        Output::Json => print_json(&doc)?,
        Output::Csv => {
            println!("m_t,m_r,scheme,extension,scaled_m_t,scaled_m_r,per_user,verdict");
            println!(
                "{},{},{},{},{},{},{},{}",
                cfg.m_t(),
                cfg.m_r(),
                scheme.kind.name(),
                c.channel.extension(),
                c.channel.m_t(),
                c.channel.m_r(),
                c.solution.demand[0],
                if report.pass { "pass" } else { "fail" }
            );
        }
        Output::Text => {
            println!("config     {cfg}");
            println!("scheme     {}", scheme.kind.name());
            println!("channel    {}x{} over {} slot(s)", c.channel.m_t(), c.channel.m_r(), c.channel.extension());
            println!("streams    {:?}", c.solution.demand);
            for rx in &report.per_rx {
                println!(
                    "rx {}       interference {} desired {} joint {} residual {:.1e} {}",
                    rx.rx,
                    rx.interference_dim,
                    rx.desired_dim,
                    rx.joint_rank,
                    rx.residual,
                    if rx.pass { "ok" } else { "FAIL" }
                );
            }
            println!("verdict    {}", if report.pass { "pass" } else { "fail" });
        }
    }
    Ok(report.pass)
}

fn cmd_grid(
    cli: &Cli,
    max: usize,
    max_n: usize,
    opts: &GridOptions,
    csv: Option<&PathBuf>,
    json_path: Option<&PathBuf>,
) -> Outcome {
    let grid = certifier::feasibility_grid_with(max, max_n, opts);
    if let Some(path) = csv {
        std::fs::write(path, grid.to_csv()?)?;
    }
    if let Some(path) = json_path {
        std::fs::write(path, grid.to_json()?)?;
    }
    match cli.output {
        Output::Json => println!("{}", grid.to_json()?),
        Output::Csv => print!("{}", grid.to_csv()?),
        Output::Text => {
            let failing: Vec<_> = grid.cells.iter().filter(|c| !c.pass).collect();
            println!("cells      {}", grid.cells.len());
            println!("failing    {}", failing.len());
            println!("mismatch   {}", grid.mismatches().len());
            for c in failing {
                println!("  {}x{} d={} {}", c.m_t, c.m_r, c.d, c.error.as_deref().unwrap_or("rank test failed"));
            }
        }
    }
    Ok(grid.all_pass() && grid.mismatches().is_empty())
}

fn cmd_survey(cli: &Cli, max: usize, opts: &GridOptions) -> Outcome {
    let cells = certifier::time_extension_survey(max, opts);
    match cli.output {
        Output::Json => print_json(&cells)?,
        Output::Csv => {
            println!("m_t,m_r,extension,per_user,constant,varying,needs_time_variation");
            for c in &cells {
                println!(
                    "{},{},{},{},{},{},{}",
                    c.m_t,
                    c.m_r,
                    c.extension,
                    c.per_user,
                    c.constant_pass,
                    c.varying_pass,
                    c.needs_time_variation()
                );
            }
        }
        Output::Text => {
            for c in &cells {
                println!(
                    "{}x{} T={} {}/user constant={} varying={}",
                    c.m_t,
                    c.m_r,
                    c.extension,
                    c.per_user,
                    verdict(c.constant_pass),
                    verdict(c.varying_pass)
                );
            }
            let needs: Vec<String> =
                cells.iter().filter(|c| c.needs_time_variation()).map(|c| format!("{}x{}", c.m_t, c.m_r)).collect();
            println!("needs time variation: {}", if needs.is_empty() { "none".into() } else { needs.join(" ") });
        }
    }
    Ok(cells.iter().all(|c| c.varying_pass))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn cmd_cob(cli: &Cli, p: usize) -> Outcome {
    let ch = ChannelSet::generate(p, p + 1, Flavor::Constant, cli.seed)?;
    let bc = cob::cob_recursive_with_tol(&ch, p, cli.rel_tol)?;
    let mask = cob::builtin_pattern(p)?;
    let report = cob::verify_connectivity(&bc, &mask, cob::DEFAULT_PATTERN_TOL)?;
    match cli.output {
        Output::Json | Output::Csv => print_json(&json!({
            "p": p,
            "seed": cli.seed,
            "zeros": mask.count_zeros(),
            "max_residual": report.max_residual,
            "pattern_tol": report.pattern_tol,
            "pass": report.pass,
        }))?,
        Output::Text => {
            print!("{}", cob::connectivity_table(&bc, cob::DEFAULT_PATTERN_TOL));
            println!("max residual {:.2e} (tol {:.0e})", report.max_residual, report.pattern_tol);
            println!("verdict {}", verdict(report.pass));
        }
    }
    Ok(report.pass)
}
