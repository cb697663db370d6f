use std::path::PathBuf;

use eiie::config::{DataSource, RunConfig};
use eiie::marketdata::write_candles_csv;
use eiie::policy::TopologyKind;
use eiie::Error;

const HALF_HOUR: i64 = 1800;
const DAY: i64 = 86_400;

fn small() -> RunConfig {
    RunConfig::parse(&format!(
        "# three drifting assets, two kept\n\
         data_source = synthetic:A:0.001:0.01,B:0:0.02,C:-0.001:0.01\n\
         number_of_assets = 3\n\
         volume_observation = 1\n\
         window_size = 10\n\
         batch_size = 5\n\
         total_steps = 4\n\
         rolling_steps = 1\n\
         train_start = {}\n\
         train_end = {}\n\
         test_start = {}\n\
         test_end = {}\n",
        2 * DAY,
        2 * DAY + 100 * HALF_HOUR,
        2 * DAY + 100 * HALF_HOUR,
        2 * DAY + 130 * HALF_HOUR,
    ))
    .unwrap()
}

#[test]
fn canonical_text_round_trips() {
    let cfg = small();
    let again = RunConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_text(), cfg.to_text());
    assert!(cfg.to_text().lines().all(|l| l.contains(" = ")));
}

#[test]
fn defaults_follow_the_reference_hyperparameters() {
    let cfg = RunConfig::default();
    let t = cfg.training().unwrap();
    assert_eq!((t.batch_size, t.window_size, cfg.number_of_assets, cfg.trading_period), (50, 50, 12, 1800));
    assert_eq!((t.total_steps, t.rolling_steps), (2_000_000, 30));
    assert_eq!((t.learning_rate, t.sample_bias, t.regularization_coefficient), (3e-5, 5e-5, 1e-8));
    assert_eq!(cfg.commission_rate, 0.0025);
    assert!(cfg.online_learning && cfg.benchmark_commission);
}

#[test]
fn bad_text_is_refused() {
    assert!(matches!(RunConfig::parse("no_such_key = 1"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("batch_size"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("batch_size = many"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("total_steps = 1.5"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("online_learning = maybe"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("data_source = ftp://x"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("data_source = synthetic:A:1"), Err(Error::Config(_))));
    assert_eq!(RunConfig::parse("total_steps = 2e4").unwrap().total_steps, 20_000);
    assert_eq!(RunConfig::parse("topology = lstm").unwrap().topology, TopologyKind::Lstm);
}

#[test]
fn preflight_rejects_inconsistent_runs() {
    let mut overlap = small();
    overlap.test_start = overlap.train_end - HALF_HOUR;
    assert!(matches!(overlap.validate(), Err(Error::Config(_))));

    let mut off_grid = small();
    off_grid.test_end += 7;
    assert!(matches!(off_grid.validate(), Err(Error::Config(_))));

    let mut too_many = small();
    too_many.number_of_assets = 5;
    assert!(matches!(too_many.validate(), Err(Error::Config(_))));

    let mut short = small();
    short.train_end = short.train_start + 10 * HALF_HOUR;
    assert!(matches!(short.validate(), Err(Error::Config(_))));

    let mut http = small();
    http.set("data_source", "http://127.0.0.1:9/public").unwrap();
    http.set("pairs", "ETH").unwrap();
    assert!(matches!(http.validate(), Err(Error::Config(_))));
    http.set("pairs", "ETH, XMR").unwrap();
    assert!(http.validate().is_ok());

    let mut odd_period = small();
    odd_period.trading_period = 1000;
    assert!(matches!(odd_period.validate(), Err(Error::Config(_))));
}

#[test]
fn prepared_ranges_line_up_with_the_panel() {
    let cfg = small();
    assert_eq!(cfg.data_start(), cfg.train_start);
    let mut long_window = cfg.clone();
    long_window.volume_observation = 3;
    assert_eq!(long_window.data_start(), cfg.test_start - 3 * DAY);
    assert!(long_window.data_start() < cfg.train_start);
    let all = cfg.load_market(None).unwrap();
    assert_eq!(all.len(), 3);
    let data = cfg.prepare(&all).unwrap();
    assert_eq!(data.panel.m(), 2);
    assert_eq!(data.panel.len(), 130);
    assert_eq!((data.train_last, data.test_start, data.test_end), (99, 100, 130));
    assert_eq!(data.panel.timestamp(0), cfg.train_start);

    let bt = cfg.backtest(&data).unwrap();
    assert_eq!((bt.start, bt.end, bt.fees.selling()), (100, 130, 0.0025));
    let mut free = cfg.clone();
    free.benchmark_commission = false;
    assert!(free.benchmark(&data).unwrap().fees.is_zero());
    assert!(!cfg.benchmark(&data).unwrap().fees.is_zero());

    let t = cfg.trainer(&data).unwrap();
    assert_eq!((t.memory.len(), t.policy.topology.m, t.policy.topology.n), (130, 2, 10));
}

#[test]
fn csv_directories_load_like_the_generated_market() {
    let cfg = small();
    let all = cfg.load_market(None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let series: Vec<_> = all.values().collect();
    write_candles_csv(std::fs::File::create(dir.path().join("a.csv")).unwrap(), series[..2].iter().copied()).unwrap();
    write_candles_csv(std::fs::File::create(dir.path().join("b.csv")).unwrap(), series[2..].iter().copied()).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let mut from_csv = cfg.clone();
    from_csv.data_source = DataSource::Csv(dir.path().to_path_buf());
    assert_eq!(from_csv.load_market(None).unwrap(), all);

    from_csv.data_source = DataSource::Csv(dir.path().join("a.csv"));
    assert_eq!(from_csv.load_market(None).unwrap().len(), 2);

    write_candles_csv(std::fs::File::create(dir.path().join("c.csv")).unwrap(), series[..1].iter().copied()).unwrap();
    from_csv.data_source = DataSource::Csv(dir.path().to_path_buf());
    assert!(matches!(from_csv.load_market(None), Err(Error::Data(_))));

    from_csv.data_source = DataSource::Csv(PathBuf::from("/definitely/not/here.csv"));
    assert!(from_csv.load_market(None).is_err());
}

#[test]
fn the_same_seeds_give_the_same_market() {
    let cfg = small();
    assert_eq!(cfg.load_market(None).unwrap(), cfg.load_market(None).unwrap());
    let mut other = cfg.clone();
    other.data_seed += 1;
    assert_ne!(other.load_market(None).unwrap(), cfg.load_market(None).unwrap());
}
