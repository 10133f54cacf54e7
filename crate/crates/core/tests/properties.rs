mod common;

use proptest::prelude::*;
use tcl_response::harness::{Placement, ScenarioConfig};
use tcl_response::{
    assign_thresholds, availability_over, availability_under, prioritize, success_probability, synthesize, AcParams,
    Candidate, Curve, Device, DeviceParams, Dip, EventSpec, EwhParams, Report, Service,
};

fn ac_params() -> impl Strategy<Value = DeviceParams<f64>> {
    (5.5..6.5, 2.0..2.4, 3.24..3.96, 70.0..74.0, 1.0..3.0, 80.0..95.0).prop_map(|(p, r, c, set, band, amb)| {
        DeviceParams::Ac(AcParams {
            power_rating: p,
            thermal_resistance: r,
            thermal_capacitance: c,
            efficiency: 2.5,
            setpoint: set,
            deadband: band,
            ambient: amb,
        })
    })
}

fn ewh_params() -> impl Strategy<Value = DeviceParams<f64>> {
    (4.0..5.0, 0.12..0.2, 0.0..40.0, 0.001..0.002, 55.0..65.0, 65.0..75.0, 118.0..125.0, 2.0..6.0).prop_map(
        |(p, cw, m, w, tin, amb, set, band)| {
            DeviceParams::Ewh(EwhParams {
                power_rating: p,
                tank_capacitance: cw,
                flow_rate: m,
                specific_heat: 2.93e-4,
                loss_coeff: w,
                inlet_temp: tin,
                ambient: amb,
                setpoint: set,
                deadband: band,
            })
        },
    )
}

fn device() -> impl Strategy<Value = Device> {
    (prop_oneof![ac_params(), ewh_params()], 0.0..=1.0, any::<bool>(), 0u32..10_000).prop_map(|(params, x, on, id)| {
        let temp = params.lower_edge() + x * params.deadband();
        Device::new(id, params, temp, on)
    })
}

fn candidates(max: usize) -> impl Strategy<Value = Vec<Candidate<f64>>> {
    prop::collection::vec((0.5..8.0, 0.0..=1.0), 1..max).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (p, f))| Candidate { device_id: i as u32, power_rating: p, fitness: f })
            .collect()
    })
}

fn curve(under: bool, capacity: f64) -> Curve {
    if under {
        Curve::under(59.7, 59.995, capacity)
    } else {
        Curve::over(60.005, 60.3, capacity)
    }
}

proptest! {
    #[test]
    fn exact_update_composes(d in device(), a in 0.0..600.0, b in 0.0..600.0) {
        let th = d.thermal();
        let chained = th.advance(th.advance(d.temp, d.on, a), d.on, b);
        let once = th.advance(d.temp, d.on, a + b);
        prop_assert!((chained - once).abs() <= 1e-9 * once.abs().max(1.0));
    }

    #[test]
    fn exact_update_matches_rk4(d in device(), dt in 0.1..120.0) {
        let closed = d.thermal().advance(d.temp, d.on, dt);
        let mut x = d.temp;
        let n = (dt / 0.5).ceil() as usize;
        for _ in 0..n {
            x = common::rk4(&d.params, x, d.on, dt / n as f64);
        }
        prop_assert!((closed - x).abs() < 1e-9);
    }

    #[test]
    fn availabilities_complement(d in device(), window in 60.0..3600.0) {
        let under = availability_under(&d, window).unwrap();
        let over = availability_over(&d, window).unwrap();
        prop_assert!((0.0..=1.0).contains(&under));
        prop_assert!((0.0..=1.0).contains(&over));
        prop_assert_eq!(under + over, 1.0);
    }

    #[test]
    fn priority_is_sorted_permutation(c in candidates(60)) {
        let reports: Vec<Report> = c
            .iter()
            .map(|c| Report {
                device_id: c.device_id,
                power_rating: c.power_rating,
                service: Service::UnderFreq,
                availability: c.fitness,
                quality: 1.0,
                fitness: c.fitness,
                window: (0.0, 300.0),
            })
            .collect();
        let order = prioritize(&reports).unwrap();
        let mut ids: Vec<u32> = order.iter().map(|c| c.device_id).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..c.len() as u32).collect::<Vec<_>>());
        for w in order.windows(2) {
            prop_assert!(w[0].fitness >= w[1].fitness);
            if w[0].fitness == w[1].fitness {
                prop_assert!(w[0].power_rating >= w[1].power_rating);
            }
        }
    }

    #[test]
    fn thresholds_strictly_ordered_in_band(c in candidates(60), under in any::<bool>()) {
        let total: f64 = c.iter().map(|c| c.power_rating).sum();
        let spec = curve(under, total);
        let a = assign_thresholds(&c, &spec).unwrap();
        for d in &a.devices {
            prop_assert!(d.threshold >= spec.omega_l && d.threshold <= spec.omega_u);
        }
        for w in a.devices.windows(2) {
            if under {
                prop_assert!(w[0].threshold > w[1].threshold);
            } else {
                prop_assert!(w[0].threshold < w[1].threshold);
            }
        }
    }

    #[test]
    fn staircase_within_one_device(c in candidates(40), under in any::<bool>(), x in 0.0..=1.0) {
        let total: f64 = c.iter().map(|c| c.power_rating).sum();
        let spec = curve(under, total);
        let a = assign_thresholds(&c, &spec).unwrap();
        let omega = spec.omega_l + x * spec.band();
        let gap = a.target(omega) - a.staircase(omega);
        prop_assert!(gap.abs() <= a.max_rating());
        // thresholds sit at the droop line, so the staircase never overshoots
        prop_assert!(gap >= -1e-9 * total);
    }

    #[test]
    fn success_matches_enumeration(c in candidates(9)) {
        let total: f64 = c.iter().map(|c| c.power_rating).sum();
        let a = assign_thresholds(&c, &curve(true, total)).unwrap();
        let (success, failure_lb) = success_probability(&a);
        let fitness: Vec<f64> = a.devices.iter().map(|d| d.fitness).collect();
        let (all, some_fail) = common::enumerate_outcomes(&fitness);
        prop_assert!((success - all).abs() < 1e-12);
        prop_assert!(some_fail + 1e-12 >= failure_lb);
    }

    #[test]
    fn synthesized_trace_is_continuous(
        n in 0.01f64..0.5,
        rocof in 0.01f64..0.2,
        tau in 5.0..60.0,
        settle in 0.0..=1.0,
        start in 0.0..30.0,
        dt in 0.01..1.0,
    ) {
        let settle = settle * n;
        let dip = Dip { start_time: start, nadir_deviation: n, initial_rocof: rocof, recovery_time_constant: tau, settle_offset: settle };
        prop_assume!(dip.validate().is_ok());
        let spec = EventSpec::UnderFreq(dip);
        let trace = synthesize(&spec, 60.0, spec.required_duration() + 1.0, dt).unwrap();
        for w in trace.values.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= rocof * dt * (1.0 + 1e-9) + 1e-12);
        }
        let lowest = trace.values.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(lowest >= 60.0 - n - 1e-12);
        prop_assert!((spec.frequency(60.0, dip.nadir_time()) - (60.0 - n)).abs() < 1e-12);
    }

    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        runs in 1usize..500,
        commitment in 0.01..1.3,
        window_min in 1u32..30,
        placement in prop_oneof![Just(Placement::Start), Just(Placement::Middle), Just(Placement::End), Just(Placement::Uniform)],
        ac in 0usize..3000,
        tol in prop::option::of(0.0..10.0),
    ) {
        let mut cfg = ScenarioConfig { seed, runs, commitment, placement, tolerance_kw: tol, ..ScenarioConfig::default() };
        cfg.window_s = 60.0 * window_min as f64;
        cfg.population.ac_count = ac;
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    }
}
