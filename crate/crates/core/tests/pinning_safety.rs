use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use spchain_core::consensus::{pin, ConsensusGroup, Member, PinOutcome, Vote};
use spchain_core::crypto::{Hash32, Keypair};
use spchain_core::ledger::{quorum_met, sign_vote};
use spchain_core::MinerId;

/// Which subject an honest member votes for.
#[derive(Clone, Copy, PartialEq)]
enum Choice {
    First,
    Second,
    Neither,
}

const CHOICES: [Choice; 3] = [Choice::First, Choice::Second, Choice::Neither];

/// Walks every adversary set and every honest three-way split. Adversaries
/// sign both subjects. Returns the adversary sets that produced two quorums.
fn double_quorums(weights: &[f64]) -> Vec<u32> {
    let x = weights.len();
    let total: f64 = weights.iter().sum();
    let mut found = Vec::new();
    for adversary in 0u32..(1 << x) {
        let honest: Vec<usize> = (0..x).filter(|i| adversary & (1 << i) == 0).collect();
        let adv_count = adversary.count_ones() as usize;
        let adv_weight: f64 = (0..x).filter(|i| adversary & (1 << i) != 0).map(|i| weights[i]).sum();
        let splits = 3usize.pow(honest.len() as u32);
        for split in 0..splits {
            let mut code = split;
            let (mut c1, mut w1, mut c2, mut w2) = (adv_count, adv_weight, adv_count, adv_weight);
            for &h in &honest {
                match CHOICES[code % 3] {
                    Choice::First => {
                        c1 += 1;
                        w1 += weights[h];
                    }
                    Choice::Second => {
                        c2 += 1;
                        w2 += weights[h];
                    }
                    Choice::Neither => {}
                }
                code /= 3;
            }
            if quorum_met(c1, w1, x, total) && quorum_met(c2, w2, x, total) {
                found.push(adversary);
                break;
            }
        }
    }
    found
}

/// An adversary is bounded if it holds fewer than a third of the seats or at
/// most a third of the weight.
fn bounded(weights: &[f64], adversary: u32) -> bool {
    let x = weights.len();
    let total: f64 = weights.iter().sum();
    let count = adversary.count_ones() as usize;
    let weight: f64 = (0..x).filter(|i| adversary & (1 << i) != 0).map(|i| weights[i]).sum();
    3 * count < x || 3.0 * weight <= total
}

fn check(weights: &[f64]) {
    for adversary in double_quorums(weights) {
        assert!(
            !bounded(weights, adversary),
            "weights {weights:?}: bounded adversary {adversary:#b} equivocated"
        );
    }
}

#[test]
fn bounded_adversaries_never_pin_two_subjects_random_weights() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for x in 1..=7 {
        for _ in 0..60 {
            let weights: Vec<f64> = (0..x).map(|_| rng.gen_range(0.001..1.0)).collect();
            check(&weights);
        }
    }
}

#[test]
fn bounded_adversaries_never_pin_two_subjects_edge_weights() {
    // Multiples of 1/8 are exact in binary, so thirds of the total land on
    // the boundary without rounding noise.
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    for x in 1..=7 {
        check(&vec![1.0; x]);
        let mut skewed = vec![0.125; x];
        skewed[0] = 8.0;
        check(&skewed);
        for _ in 0..60 {
            let weights: Vec<f64> = (0..x).map(|_| rng.gen_range(1..=16) as f64 / 8.0).collect();
            check(&weights);
        }
    }
}

#[test]
fn the_bound_is_tight() {
    // One seat of three carrying most of the weight can equivocate once it
    // holds a third of the seats and more than a third of the weight.
    let weights = [2.0, 0.5, 0.5];
    assert!(double_quorums(&weights).contains(&0b001));
    assert!(!bounded(&weights, 0b001));
    // Equal weights: two of four seats hold half the weight.
    assert!(double_quorums(&[1.0; 4]).contains(&0b0011));
}

fn group(weights: &[f64]) -> (ConsensusGroup, Vec<Keypair>) {
    let keys: Vec<Keypair> = (0..weights.len())
        .map(|i| Keypair::from_seed([i as u8 + 40; 32]))
        .collect();
    let members = weights
        .iter()
        .zip(&keys)
        .enumerate()
        .map(|(i, (&weight, k))| Member {
            id: MinerId(i as u32),
            weight,
            public_key: k.public(),
        })
        .collect();
    (ConsensusGroup::new(5, members), keys)
}

fn signed(keys: &[Keypair], who: impl Iterator<Item = usize>, subject: &Hash32) -> Vec<Vote> {
    who.map(|i| Vote {
        signer: MinerId(i as u32),
        signature: sign_vote(subject, 5, &keys[i]),
    })
    .collect()
}

#[test]
fn signed_votes_agree_with_the_enumeration() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let first = Hash32([1; 32]);
    let second = Hash32([2; 32]);
    for _ in 0..200 {
        let x = rng.gen_range(1..=7);
        let weights: Vec<f64> = (0..x).map(|_| rng.gen_range(0.01..1.0)).collect();
        let (g, keys) = group(&weights);
        let adversary: u32 = rng.gen_range(0..(1 << x));
        let choices: Vec<Choice> = (0..x).map(|_| CHOICES[rng.gen_range(0..3)]).collect();
        let is_adv = |i: usize| adversary & (1 << i) != 0;
        let for_first = signed(
            &keys,
            (0..x).filter(|&i| is_adv(i) || choices[i] == Choice::First),
            &first,
        );
        let for_second = signed(
            &keys,
            (0..x).filter(|&i| is_adv(i) || choices[i] == Choice::Second),
            &second,
        );
        let a = pin(&first, &for_first, &g, &mut Vec::new());
        let b = pin(&second, &for_second, &g, &mut Vec::new());
        let both = matches!(a, PinOutcome::Certified(_)) && matches!(b, PinOutcome::Certified(_));
        if bounded(&weights, adversary) {
            assert!(!both, "weights {weights:?} adversary {adversary:#b}");
        }
        if let PinOutcome::Certified(cert) = a {
            assert_eq!(cert.verify(&first, &g), Ok(()));
            assert!(cert.verify(&second, &g).is_err());
        }
    }
}
