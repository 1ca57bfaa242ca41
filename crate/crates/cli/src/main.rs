//! Command line front end for the market clearing library.
//!
//! Every subcommand is a thin shell over one library operation: parse
//! arguments, read input files, call the operation, print a report. JSON
//! reports carry an envelope whose inner `report` block is byte-identical
//! across runs of the same command on the same inputs; wall-clock duration
//! rides outside it. CSV output prints bare tables with no envelope.
//!
//! Exit codes separate findings from failures: 0 success or verified, 1 a
//! negative finding (refuted profile, failed structural check, pivotal
//! participant), 2 input error, 3 infeasible, 4 unbounded, 5 internal
//! solver failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use gridclear_core::{
    best_response, best_response_dynamics, best_response_dynamics_two_sided,
    best_response_two_sided, build_example, check_assumption1, check_congestion_free,
    check_monopoly_free, construct_ne_congestion_free, construct_ne_monopoly_free,
    construct_pnsp_efficient_bids, dispatch_csv, double_sided_csv, double_sided_settlement_csv,
    lmp_payoffs, lmp_payoffs_double_sided, load_bid_profile, load_scenario, pnsp_settle,
    pnsp_settle_double_sided, price_of_anarchy, settlement_csv, solve_bid_dispatch,
    solve_double_sided, solve_economic_dispatch, trajectory_csv, two_sided_trajectory_csv,
    verify_epsilon_ne, verify_epsilon_ne_two_sided, verify_kkt, Bid, BidGrid, ConsumerBid,
    CostBasis, DispatchError, DoubleSidedError, GameError, Mechanism, ModelError, PnspError,
    Scenario, ToleranceBlock, TwoSidedPlayer,
};

#[derive(Parser)]
#[command(
    name = "gridclear",
    version,
    about = "Market clearing, settlement, and bidding games on DC power networks"
)]
struct Cli {
    /// Upper bound on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format. CSV is available for dispatch, pnsp, and game dynamics.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear a scenario: economic dispatch, or bid-based with --bids.
    Dispatch {
        scenario: PathBuf,
        /// Bid document; required when the scenario has consumers.
        #[arg(long)]
        bids: Option<PathBuf>,
    },
    /// Run the structural checks: exclusion feasibility, congestion, and
    /// per-node competition. Exits 1 when any check fails.
    Check { scenario: PathBuf },
    /// Strategic instruments of the bidding game.
    Game {
        scenario: PathBuf,
        #[command(subcommand)]
        instrument: Instrument,
    },
    /// Settle by exclusion-based second prices. Without flags, efficient
    /// bids are constructed first; refused when a generator is pivotal.
    Pnsp {
        scenario: PathBuf,
        /// Settle this bid document instead of constructing one.
        #[arg(long, conflicts_with = "construct")]
        bids: Option<PathBuf>,
        /// Construct efficient bids, then settle them.
        #[arg(long)]
        construct: bool,
    },
    /// Write a bundled study network and its reference outcomes.
    Examples {
        /// Which family: 1 (congested duopoly), 2 (congested chain),
        /// 3 (paired duopoly).
        kind: u32,
        /// Markup parameter of family 3.
        #[arg(long)]
        k: Option<f64>,
        /// Line capacity (families 1 and 3) or near-line capacity (family 2).
        #[arg(long = "C")]
        c: Option<f64>,
        /// Far-line capacity of family 2.
        #[arg(long = "Cp")]
        cp: Option<f64>,
        /// Total demand (families 1 and 2).
        #[arg(long = "D")]
        d: Option<f64>,
        /// Directory the scenario and reference files are written to.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Instrument {
    /// Check a bid document for grid epsilon equilibrium.
    Verify {
        #[arg(long)]
        bids: PathBuf,
        /// Largest tolerated unilateral gain.
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = MechArg::Lmp)]
        mech: MechArg,
    },
    /// Best reply of one participant against a fixed bid document.
    BestResponse {
        #[arg(long)]
        bids: PathBuf,
        /// Participant id from the scenario.
        #[arg(long)]
        player: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = MechArg::Lmp)]
        mech: MechArg,
    },
    /// Round-robin best-response dynamics. Starts from zero bids unless
    /// --bids supplies an initial document.
    Dynamics {
        #[arg(long)]
        bids: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = MechArg::Lmp)]
        mech: MechArg,
    },
    /// Build an equilibrium bid profile from scenario structure.
    Construct {
        #[arg(long, value_enum)]
        kind: ConstructKind,
    },
    /// Price of anarchy over equilibrium profiles (repeat --bids per profile).
    Poa {
        #[arg(long, required = true)]
        bids: Vec<PathBuf>,
        /// Equilibrium tolerance a profile must pass to count.
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = MechArg::Lmp)]
        mech: MechArg,
    },
}

#[derive(Args)]
struct GridArgs {
    /// Price grid step.
    #[arg(long = "grid", default_value_t = 0.1)]
    grid: f64,
    /// Price ceiling; defaults to the scenario bid cap.
    #[arg(long)]
    cap: Option<f64>,
    /// Quantity grid step for two-part bids.
    #[arg(long)]
    qstep: Option<f64>,
    /// Quantity ceiling for two-part bids.
    #[arg(long)]
    qcap: Option<f64>,
    /// Inject cost slopes and rival bid prices into the price axis
    /// (default for verify, best-response, and poa).
    #[arg(long, conflicts_with = "no_augment")]
    augment: bool,
    /// Keep the price axis a pure lattice (default for dynamics, whose
    /// cycle detection needs candidates independent of rival bids).
    #[arg(long)]
    no_augment: bool,
    /// Restrict candidates to single-price bids.
    #[arg(long)]
    linear_only: bool,
}

impl GridArgs {
    fn to_grid(&self, augment_default: bool) -> BidGrid {
        let augment_critical = if self.augment {
            true
        } else if self.no_augment {
            false
        } else {
            augment_default
        };
        BidGrid {
            price_step: self.grid,
            price_ceiling: self.cap,
            quantity_step: self.qstep,
            quantity_ceiling: self.qcap,
            augment_critical,
            linear_only: self.linear_only,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechArg {
    /// Pay locational marginal prices.
    Lmp,
    /// Pay exclusion-based second prices.
    Pnsp,
}

impl MechArg {
    fn to_mechanism(self) -> Mechanism {
        match self {
            MechArg::Lmp => Mechanism::Lmp,
            MechArg::Pnsp => Mechanism::Pnsp,
        }
    }

    fn name(self) -> &'static str {
        match self {
            MechArg::Lmp => "lmp",
            MechArg::Pnsp => "pnsp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstructKind {
    /// Uniform-price profile for scenarios whose optimum leaves no line
    /// at capacity.
    CongestionFree,
    /// Marginal-cost profile for scenarios with at least two generators
    /// per node.
    MonopolyFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct Settings {
    threads: usize,
    tolerances: ToleranceBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    mechanism: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<BidGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounds: Option<usize>,
}

impl Settings {
    fn base() -> Self {
        Settings {
            threads: rayon::current_num_threads(),
            tolerances: ToleranceBlock::current(),
            mechanism: None,
            grid: None,
            epsilon: None,
            rounds: None,
        }
    }

    fn with_game(mech: MechArg, grid: &BidGrid) -> Self {
        Settings {
            mechanism: Some(mech.name()),
            grid: Some(grid.clone()),
            ..Settings::base()
        }
    }
}

/// Everything in here is a pure function of command and inputs; duration
/// stays outside so repeated runs emit identical report bytes.
#[derive(Serialize)]
struct Report {
    command: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario_digest: Option<String>,
    settings: Settings,
    result: Value,
}

#[derive(Serialize)]
struct Envelope {
    report: Report,
    duration_ms: u64,
}

struct Output {
    result: Value,
    csv: Option<String>,
    settings: Settings,
    digest: Option<String>,
    exit: i32,
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Input(String),
    Model(ModelError),
    Dispatch(DispatchError),
    Game(GameError),
    Pnsp(PnspError),
    DoubleSided(DoubleSidedError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Input(m) => write!(f, "{m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Dispatch(e) => write!(f, "{e}"),
            CliError::Game(e) => write!(f, "{e}"),
            CliError::Pnsp(e) => write!(f, "{e}"),
            CliError::DoubleSided(e) => write!(f, "{e}"),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

impl From<DispatchError> for CliError {
    fn from(e: DispatchError) -> Self {
        CliError::Dispatch(e)
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        CliError::Game(e)
    }
}

impl From<PnspError> for CliError {
    fn from(e: PnspError) -> Self {
        CliError::Pnsp(e)
    }
}

impl From<DoubleSidedError> for CliError {
    fn from(e: DoubleSidedError) -> Self {
        CliError::DoubleSided(e)
    }
}

fn model_exit(e: &ModelError) -> i32 {
    match e {
        ModelError::Solver(_) => 5,
        _ => 2,
    }
}

fn dispatch_exit(e: &DispatchError) -> i32 {
    match e {
        DispatchError::Model(e) => model_exit(e),
        DispatchError::Infeasible(_) => 3,
        DispatchError::Unbounded => 4,
        DispatchError::Solver(_) => 5,
    }
}

fn pnsp_exit(e: &PnspError) -> i32 {
    match e {
        PnspError::Pivotal(_) | PnspError::Construction(_) => 1,
        PnspError::Model(e) => model_exit(e),
        PnspError::Dispatch(e) => dispatch_exit(e),
    }
}

fn game_exit(e: &GameError) -> i32 {
    match e {
        GameError::Grid(_) | GameError::ExampleParams(_) => 2,
        GameError::Precondition(_)
        | GameError::Construction(_)
        | GameError::NoVerifiedProfiles(_) => 1,
        GameError::Model(e) => model_exit(e),
        GameError::Dispatch(e) => dispatch_exit(e),
        GameError::Settlement(e) => pnsp_exit(e),
    }
}

fn double_sided_exit(e: &DoubleSidedError) -> i32 {
    match e {
        DoubleSidedError::Model(e) => model_exit(e),
        DoubleSidedError::Infeasible(_) => 3,
        DoubleSidedError::Unbounded(_) => 4,
        DoubleSidedError::Pivotal(_) => 1,
        DoubleSidedError::Game(e) => game_exit(e),
        DoubleSidedError::Solver(_) => 5,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Input(_) => 2,
            CliError::Model(e) => model_exit(e),
            CliError::Dispatch(e) => dispatch_exit(e),
            CliError::Game(e) => game_exit(e),
            CliError::Pnsp(e) => pnsp_exit(e),
            CliError::DoubleSided(e) => double_sided_exit(e),
        }
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return 5;
        }
    }
    let started = Instant::now();
    match execute(&cli.command) {
        Ok(out) => {
            match cli.format {
                Format::Json => {
                    let envelope = Envelope {
                        report: Report {
                            command: std::env::args().collect(),
                            scenario_digest: out.digest,
                            settings: out.settings,
                            result: out.result,
                        },
                        duration_ms: started.elapsed().as_millis() as u64,
                    };
                    let text =
                        serde_json::to_string_pretty(&envelope).expect("reports serialize");
                    println!("{text}");
                }
                Format::Csv => match &out.csv {
                    Some(csv) => print!("{csv}"),
                    None => {
                        eprintln!(
                            "error: this command has no CSV rendering; use --format json"
                        );
                        return 2;
                    }
                },
            }
            out.exit
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn execute(command: &Command) -> Result<Output, CliError> {
    match command {
        Command::Dispatch { scenario, bids } => cmd_dispatch(scenario, bids.as_deref()),
        Command::Check { scenario } => cmd_check(scenario),
        Command::Game {
            scenario,
            instrument,
        } => cmd_game(scenario, instrument),
        Command::Pnsp {
            scenario,
            bids,
            construct,
        } => cmd_pnsp(scenario, bids.as_deref(), *construct),
        Command::Examples {
            kind,
            k,
            c,
            cp,
            d,
            out,
        } => cmd_examples(*kind, *k, *c, *cp, *d, out),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_scenario_file(path: &Path) -> Result<(Scenario, String), CliError> {
    let text = read_file(path)?;
    let scenario = load_scenario(&text)?;
    let digest = format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())));
    Ok((scenario, digest))
}

fn load_bids_file(
    path: &Path,
    scenario: &Scenario,
) -> Result<(Vec<Bid>, Vec<ConsumerBid>), CliError> {
    let text = read_file(path)?;
    Ok(load_bid_profile(&text, scenario)?)
}

fn val<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report types serialize")
}

/// Render bids in the document shape `load_bid_profile` accepts, so report
/// output can be fed back in as input.
fn bid_document(scenario: &Scenario, bids: &[Bid]) -> Value {
    let entries: Vec<Value> = scenario
        .generators
        .iter()
        .zip(bids)
        .map(|(g, b)| json!({"generator": g.id, "p": b.p, "s": b.s, "q": b.q}))
        .collect();
    Value::Array(entries)
}

fn cmd_dispatch(scenario_path: &Path, bids_path: Option<&Path>) -> Result<Output, CliError> {
    let (scenario, digest) = load_scenario_file(scenario_path)?;
    let settings = Settings::base();
    let Some(path) = bids_path else {
        if !scenario.consumers.is_empty() {
            return Err(CliError::Input(
                "scenario has consumers; clear it with --bids carrying supply and demand bids"
                    .into(),
            ));
        }
        let result = solve_economic_dispatch(&scenario)?;
        let payoffs = lmp_payoffs(&scenario, &result);
        let kkt = verify_kkt(&scenario, CostBasis::TrueCost, &result);
        return Ok(Output {
            csv: Some(dispatch_csv(&scenario, &result, &payoffs)),
            result: json!({"dispatch": val(&result), "payoffs": payoffs, "kkt": val(&kkt)}),
            settings,
            digest: Some(digest),
            exit: 0,
        });
    };
    let (bids, consumer_bids) = load_bids_file(path, &scenario)?;
    if scenario.consumers.is_empty() {
        let result = solve_bid_dispatch(&scenario, &bids)?;
        let payoffs = lmp_payoffs(&scenario, &result);
        let kkt = verify_kkt(&scenario, CostBasis::Bids(&bids), &result);
        Ok(Output {
            csv: Some(dispatch_csv(&scenario, &result, &payoffs)),
            result: json!({"dispatch": val(&result), "payoffs": payoffs, "kkt": val(&kkt)}),
            settings,
            digest: Some(digest),
            exit: 0,
        })
    } else {
        let result = solve_double_sided(&scenario, &bids, &consumer_bids)?;
        let payoffs = lmp_payoffs_double_sided(&scenario, &result);
        Ok(Output {
            csv: Some(double_sided_csv(&scenario, &result, &payoffs)),
            result: json!({"clearing": val(&result), "payoffs": val(&payoffs)}),
            settings,
            digest: Some(digest),
            exit: 0,
        })
    }
}

fn cmd_check(scenario_path: &Path) -> Result<Output, CliError> {
    let (scenario, digest) = load_scenario_file(scenario_path)?;
    let assumption1 = check_assumption1(&scenario)?;
    let optimum = solve_economic_dispatch(&scenario)?;
    let congestion = check_congestion_free(&optimum);
    let monopoly = check_monopoly_free(&scenario);
    let exclusion_note = if assumption1.holds {
        "dispatch stays feasible when any single generator is excluded".to_string()
    } else {
        format!(
            "no feasible dispatch without: {}",
            assumption1.pivotal.join(", ")
        )
    };
    let congestion_note = if congestion.congestion_free {
        "no line is at capacity in the optimal dispatch".to_string()
    } else {
        let binding: Vec<String> = congestion
            .binding
            .iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        format!(
            "lines at capacity in the optimal dispatch: {}",
            binding.join(", ")
        )
    };
    let competition_note = if monopoly.holds {
        "every node hosts at least two generators".to_string()
    } else {
        format!(
            "nodes with fewer than two generators: {}",
            monopoly.thin_nodes.join(", ")
        )
    };
    let all_hold = assumption1.holds && congestion.congestion_free && monopoly.holds;
    Ok(Output {
        result: json!({
            "assumption1": {
                "holds": assumption1.holds,
                "pivotal": assumption1.pivotal,
                "explanation": exclusion_note,
            },
            "congestion_free": {
                "holds": congestion.congestion_free,
                "binding": congestion.binding,
                "explanation": congestion_note,
            },
            "monopoly_free": {
                "holds": monopoly.holds,
                "thin_nodes": monopoly.thin_nodes,
                "explanation": competition_note,
            },
            "all_hold": all_hold,
        }),
        csv: None,
        settings: Settings::base(),
        digest: Some(digest),
        exit: if all_hold { 0 } else { 1 },
    })
}

fn resolve_player(scenario: &Scenario, id: &str) -> Result<TwoSidedPlayer, CliError> {
    if let Some(g) = scenario.generator_index(id) {
        return Ok(TwoSidedPlayer::Generator(g));
    }
    if let Some(m) = scenario.consumers.iter().position(|c| c.id == id) {
        return Ok(TwoSidedPlayer::Consumer(m));
    }
    Err(CliError::Input(format!(
        "no participant '{id}' in the scenario"
    )))
}

fn cmd_game(scenario_path: &Path, instrument: &Instrument) -> Result<Output, CliError> {
    let (scenario, digest) = load_scenario_file(scenario_path)?;
    let two_sided = !scenario.consumers.is_empty();
    match instrument {
        Instrument::Verify {
            bids,
            eps,
            grid,
            mech,
        } => {
            let g = grid.to_grid(true);
            let mut settings = Settings::with_game(*mech, &g);
            settings.epsilon = Some(*eps);
            let (gen_bids, consumer_bids) = load_bids_file(bids, &scenario)?;
            let (result, verified) = if two_sided {
                let report = verify_epsilon_ne_two_sided(
                    &scenario,
                    &gen_bids,
                    &consumer_bids,
                    mech.to_mechanism(),
                    &g,
                    *eps,
                )?;
                (val(&report), report.is_equilibrium())
            } else {
                let report =
                    verify_epsilon_ne(&scenario, &gen_bids, mech.to_mechanism(), &g, *eps)?;
                (val(&report), report.is_equilibrium())
            };
            Ok(Output {
                result,
                csv: None,
                settings,
                digest: Some(digest),
                exit: if verified { 0 } else { 1 },
            })
        }
        Instrument::BestResponse {
            bids,
            player,
            grid,
            mech,
        } => {
            let g = grid.to_grid(true);
            let settings = Settings::with_game(*mech, &g);
            let (gen_bids, consumer_bids) = load_bids_file(bids, &scenario)?;
            let reply = if two_sided {
                let who = resolve_player(&scenario, player)?;
                val(&best_response_two_sided(
                    &scenario,
                    &gen_bids,
                    &consumer_bids,
                    who,
                    mech.to_mechanism(),
                    &g,
                )?)
            } else {
                let who = scenario.generator_index(player).ok_or_else(|| {
                    CliError::Input(format!("no generator '{player}' in the scenario"))
                })?;
                val(&best_response(
                    &scenario,
                    &gen_bids,
                    who,
                    mech.to_mechanism(),
                    &g,
                )?)
            };
            Ok(Output {
                result: json!({"player": player, "best_response": reply}),
                csv: None,
                settings,
                digest: Some(digest),
                exit: 0,
            })
        }
        Instrument::Dynamics {
            bids,
            rounds,
            grid,
            mech,
        } => {
            let g = grid.to_grid(false);
            let mut settings = Settings::with_game(*mech, &g);
            settings.rounds = Some(*rounds);
            let (gen_init, consumer_init) = match bids {
                Some(path) => load_bids_file(path, &scenario)?,
                None => (
                    vec![Bid::linear(0.0); scenario.generators.len()],
                    vec![ConsumerBid { r: 0.0, t: 0.0, w: 0.0 }; scenario.consumers.len()],
                ),
            };
            let (result, csv) = if two_sided {
                let report = best_response_dynamics_two_sided(
                    &scenario,
                    &gen_init,
                    &consumer_init,
                    mech.to_mechanism(),
                    &g,
                    *rounds,
                )?;
                let csv = two_sided_trajectory_csv(&scenario, &report.trajectory);
                (val(&report), csv)
            } else {
                let report =
                    best_response_dynamics(&scenario, &gen_init, mech.to_mechanism(), &g, *rounds)?;
                let csv = trajectory_csv(&scenario, &report.trajectory);
                (val(&report), csv)
            };
            Ok(Output {
                result,
                csv: Some(csv),
                settings,
                digest: Some(digest),
                exit: 0,
            })
        }
        Instrument::Construct { kind } => {
            if two_sided {
                return Err(CliError::Input(
                    "equilibrium constructions cover supply-only scenarios".into(),
                ));
            }
            let bids = match kind {
                ConstructKind::CongestionFree => construct_ne_congestion_free(&scenario)?,
                ConstructKind::MonopolyFree => construct_ne_monopoly_free(&scenario)?,
            };
            let outcome = solve_bid_dispatch(&scenario, &bids)?;
            let kind_name = match kind {
                ConstructKind::CongestionFree => "congestion-free",
                ConstructKind::MonopolyFree => "monopoly-free",
            };
            Ok(Output {
                result: json!({
                    "kind": kind_name,
                    "bids": bid_document(&scenario, &bids),
                    "dispatch": val(&outcome),
                }),
                csv: None,
                settings: Settings::base(),
                digest: Some(digest),
                exit: 0,
            })
        }
        Instrument::Poa {
            bids,
            eps,
            grid,
            mech,
        } => {
            if two_sided {
                return Err(CliError::Input(
                    "the anarchy ratio is defined for supply-only scenarios".into(),
                ));
            }
            let g = grid.to_grid(true);
            let mut settings = Settings::with_game(*mech, &g);
            settings.epsilon = Some(*eps);
            let mut profiles = Vec::with_capacity(bids.len());
            for path in bids {
                let (profile, _) = load_bids_file(path, &scenario)?;
                profiles.push(profile);
            }
            let report = price_of_anarchy(&scenario, &profiles, mech.to_mechanism(), &g, *eps)?;
            Ok(Output {
                result: val(&report),
                csv: None,
                settings,
                digest: Some(digest),
                exit: 0,
            })
        }
    }
}

fn cmd_pnsp(
    scenario_path: &Path,
    bids_path: Option<&Path>,
    _construct: bool,
) -> Result<Output, CliError> {
    let (scenario, digest) = load_scenario_file(scenario_path)?;
    let settings = Settings::base();
    let two_sided = !scenario.consumers.is_empty();
    match bids_path {
        Some(path) => {
            let (bids, consumer_bids) = load_bids_file(path, &scenario)?;
            if two_sided {
                let settled = pnsp_settle_double_sided(&scenario, &bids, &consumer_bids)?;
                Ok(Output {
                    csv: Some(double_sided_settlement_csv(&scenario, &settled)),
                    result: json!({"settlement": val(&settled)}),
                    settings,
                    digest: Some(digest),
                    exit: 0,
                })
            } else {
                let settled = pnsp_settle(&scenario, &bids)?;
                Ok(Output {
                    csv: Some(settlement_csv(&scenario, &settled)),
                    result: json!({"settlement": val(&settled)}),
                    settings,
                    digest: Some(digest),
                    exit: 0,
                })
            }
        }
        None => {
            if two_sided {
                return Err(CliError::Input(
                    "bid construction covers supply-only scenarios; settle a two-sided market with --bids"
                        .into(),
                ));
            }
            let bids = construct_pnsp_efficient_bids(&scenario)?;
            let settled = pnsp_settle(&scenario, &bids)?;
            Ok(Output {
                csv: Some(settlement_csv(&scenario, &settled)),
                result: json!({
                    "bids": bid_document(&scenario, &bids),
                    "settlement": val(&settled),
                }),
                settings,
                digest: Some(digest),
                exit: 0,
            })
        }
    }
}

fn cmd_examples(
    kind: u32,
    k: Option<f64>,
    c: Option<f64>,
    cp: Option<f64>,
    d: Option<f64>,
    out: &Path,
) -> Result<Output, CliError> {
    use gridclear_core::ExampleKind;
    let example = match kind {
        1 => ExampleKind::CongestedDuopoly {
            capacity: c.unwrap_or(1.0),
            demand: d.unwrap_or(2.0),
            cheap_cost: 1.0,
            dear_cost: 2.0,
            bid_cap: 10.0,
        },
        2 => ExampleKind::CongestedChain {
            near_capacity: c.unwrap_or(1.0),
            far_capacity: cp.unwrap_or(2.0),
            demand: d.unwrap_or(3.0),
            costs: [1.0, 2.0, 3.0, 4.0],
        },
        3 => ExampleKind::PairedDuopoly {
            k: k.unwrap_or(10.0),
            capacity: c.unwrap_or(1.0),
        },
        other => {
            return Err(CliError::Input(format!(
                "unknown example kind {other}; use 1, 2, or 3"
            )))
        }
    };
    let bundle = build_example(example)?;
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let scenario_path = out.join(format!("ex{kind}.json"));
    let scenario_text = serde_json::to_string_pretty(&bundle.scenario).expect("scenarios serialize");
    fs::write(&scenario_path, scenario_text + "\n")
        .map_err(|e| CliError::Io(format!("{}: {e}", scenario_path.display())))?;
    let mut ne_path = None;
    if let Some(ne) = &bundle.ne {
        let path = out.join(format!("ex{kind}_ne.json"));
        let doc = bid_document(&bundle.scenario, &ne.bids);
        let text = serde_json::to_string_pretty(&doc).expect("bid documents serialize");
        fs::write(&path, text + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        ne_path = Some(path);
    }
    Ok(Output {
        result: json!({
            "kind": kind,
            "scenario_path": scenario_path,
            "ne_path": ne_path,
            "reference": {
                "efficient_x": bundle.efficient_x,
                "efficient_pi": bundle.efficient_pi,
                "ne": val(&bundle.ne),
            },
        }),
        csv: None,
        settings: Settings::base(),
        digest: None,
        exit: 0,
    })
}
