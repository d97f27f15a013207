//! End-to-end checks on the six-AS fixture through the public API.

use std::collections::BTreeSet;

use anonsim::anonnet::{counter_raptor_guard_dist, gselect_guard_dist, parse_relays, CounterRaptorConfig};
use anonsim::attacks::{denasa_guard_inference_sim, PosteriorBelief};
use anonsim::netlayer::{dovetail_location_set, hornet_source_set, phi_build, DovetailObservation};
use anonsim::topology::{asn, parse_as_relationships, resilience, routing_state, simulate_hijack, AsGraph, AsId};
use anonsim::trial_rng;

fn t6() -> AsGraph {
    parse_as_relationships(include_str!("../../../fixtures/t6.txt")).unwrap()
}

fn set(v: &[u32]) -> BTreeSet<AsId> {
    v.iter().map(|&x| asn(x)).collect()
}

#[test]
fn routes_and_penultimates_toward_five() {
    let g = t6();
    let st = routing_state(&g, asn(5)).unwrap();
    assert_eq!(st.path(asn(6)).unwrap().ases(), &[asn(6), asn(4), asn(2), asn(5)]);
    assert_eq!(hornet_source_set(&g, asn(5), asn(2)).unwrap(), set(&[1, 2, 3, 4, 6]));
    assert!(hornet_source_set(&g, asn(5), asn(4)).unwrap().is_empty());
}

#[test]
fn hijack_and_resilience() {
    let g = t6();
    let h = simulate_hijack(&g, asn(5), asn(3)).unwrap();
    assert!(h.is_hijacked(asn(3)) && h.is_hijacked(asn(6)));
    let r = resilience(&g, asn(6), asn(4)).unwrap();
    assert_eq!((r.safe, r.candidates), (3, 4));
}

#[test]
fn guard_selection_examples() {
    let g = t6();
    let relays = parse_relays("id,as,bandwidth,is_guard\ng5,5,300,1\ng3,3,100,1\n").unwrap();
    let d = gselect_guard_dist(&g, &relays, asn(6), &set(&[1])).unwrap();
    assert_eq!((d.prob("g5"), d.prob("g3")), (0.75, 0.25));
    let cr = parse_relays("id,as,bandwidth,is_guard\ng5,5,300,1\ng4,4,100,1\n").unwrap();
    let d = counter_raptor_guard_dist(&g, &cr, asn(6), CounterRaptorConfig::new(0.5).unwrap()).unwrap();
    assert!((d.prob("g5") - 3.0 / 7.0).abs() < 1e-12 && (d.prob("g4") - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn observing_g3_pins_the_client() {
    let g = t6();
    let relays = parse_relays("id,as,bandwidth,is_guard\ng5,5,300,1\ng3,3,100,1\n").unwrap();
    let cands = set(&[4, 6]);
    for trial in 0..20 {
        let run = denasa_guard_inference_sim(&g, &relays, &set(&[1]), asn(6), &cands, 8, &mut trial_rng(1, trial))
            .unwrap();
        assert_eq!(run.beliefs[0], PosteriorBelief::uniform(cands.iter().copied()).unwrap());
        if let Some(k) = run.guards.iter().position(|id| id == "g3") {
            assert_eq!(run.beliefs[k + 1].prob(asn(6)), 1.0);
        }
    }
}

#[test]
fn dovetail_and_phi_geometry() {
    let g = t6();
    let obs = DovetailObservation { predecessor: asn(1), position: 4, destination: asn(5) };
    assert_eq!(dovetail_location_set(&g, &obs, 1).unwrap(), set(&[5, 6]));
    assert_eq!(dovetail_location_set(&g, &obs, 0).unwrap(), set(&[6]));
    let p = phi_build(&g, asn(6), asn(5), asn(3)).unwrap().unwrap();
    assert!(p.full_path.contains(p.midway));
    assert_eq!(p.full_path.source(), Some(asn(6)));
}
