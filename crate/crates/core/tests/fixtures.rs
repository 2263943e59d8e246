use std::path::Path;

use ptsdim::config::Experiment;
use ptsdim::{bits_per_symbol, TxSpec};

fn load(name: &str) -> Experiment {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    Experiment::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_fixture_parses_and_validates() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        let exp = load(&name);
        exp.validate().unwrap();
        let configs = exp.sim_configs().unwrap();
        assert!(!configs.is_empty(), "{name}");
        for (_, c) in &configs {
            c.validate().unwrap();
        }
        n += 1;
    }
    assert_eq!(n, 6);
}

#[test]
fn fixtures_round_trip_through_toml() {
    for name in ["fig2.cfg", "fig4_qam16.cfg"] {
        let exp = load(name);
        let again = Experiment::from_toml_str(&exp.to_toml_string()).unwrap();
        assert_eq!(exp, again);
    }
}

#[test]
fn fig3_fixtures_share_the_rate() {
    for name in [
        "fig3_bd_8bpcu.cfg",
        "fig3_ptsdim_aar_8bpcu.cfg",
        "fig3_reduced_8bpcu.cfg",
    ] {
        let exp = load(name);
        let (_, c) = &exp.sim_configs().unwrap()[0];
        let budget = bits_per_symbol(&c.im_params().unwrap(), c.n_u);
        assert_eq!(budget.per_user, 8, "{name}");
    }
}

#[test]
fn fig2_curves_cover_every_mode() {
    let exp = load("fig2.cfg");
    let configs = exp.sim_configs().unwrap();
    let aar: Vec<usize> = configs
        .iter()
        .filter_map(|(_, c)| match c.tx {
            TxSpec::Aar(a) => Some(a.n_on),
            _ => None,
        })
        .collect();
    assert_eq!(aar, vec![80, 70]);
    assert!(configs.iter().any(|(_, c)| c.tx == TxSpec::Direct));
    assert!(configs.iter().any(|(_, c)| c.tx == TxSpec::MinPower));
}
