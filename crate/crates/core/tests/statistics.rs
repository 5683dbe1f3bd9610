use rasim_core::access::AcbPolicy;
use rasim_core::config::parse_scenario;
use rasim_core::engine::{SimulationConfig, Simulator};
use rasim_core::metrics::STEADY_STATE_FRACTION;
use rasim_core::scenario::run_scenario;

fn steady_se(realizations: u64) -> f64 {
    let cfg = SimulationConfig {
        acb: AcbPolicy::OptimalInverse,
        frames: 100,
        realizations,
        seed: 21,
        ..Default::default()
    };
    let series = Simulator::new(cfg).unwrap().monte_carlo().unwrap();
    series.steady_state(STEADY_STATE_FRACTION).se.served_m
}

#[test]
fn standard_error_shrinks_with_realizations() {
    let ratio = steady_se(100) / steady_se(25);
    // one over the square root of four, with sampling slack
    assert!((0.35..=0.7).contains(&ratio), "ratio {ratio}");
}

fn column(header: &str, name: &str) -> usize {
    header.split(',').position(|h| h == name).unwrap()
}

#[test]
fn summary_matches_frame_csv() {
    let scenario = parse_scenario(
        "frames = 50\nrealizations = 6\nseed = 3\n[sweep]\nk_m = [800, 2400]\n",
        None,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&scenario, dir.path()).unwrap();

    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header = lines.next().unwrap();
    let (label_col, from_col) = (column(header, "label"), column(header, "steady_from"));
    for row in lines {
        let cells: Vec<&str> = row.split(',').collect();
        let index: usize = cells[0].parse().unwrap();
        let from: usize = cells[from_col].parse().unwrap();
        assert_eq!(from, 40);
        let path = dir
            .path()
            .join("frames")
            .join(format!("{index:03}_{}.csv", cells[label_col]));
        let frames = std::fs::read_to_string(path).unwrap();
        let mut flines = frames.lines();
        let fheader = flines.next().unwrap();
        let rows: Vec<Vec<f64>> = flines
            .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
            .collect();
        assert_eq!(rows.len(), 50);
        for name in ["served_u", "served_m", "backlog_m", "L_m"] {
            let c = column(fheader, name);
            let window = &rows[from..];
            let avg = window.iter().map(|r| r[c]).sum::<f64>() / window.len() as f64;
            let reported: f64 = cells[column(header, name)].parse().unwrap();
            assert!((avg - reported).abs() <= 1e-9 * avg.abs().max(1.0), "{name}: {avg} vs {reported}");
        }
    }
}
