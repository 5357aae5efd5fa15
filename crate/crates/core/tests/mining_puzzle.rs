use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use spchain_core::crypto::{Hash32, Keypair, ToyGroup};
use spchain_core::ledger::Target;
use spchain_core::mining::{check_puzzle, mine_keyblock, search_nonce, ChainView, MineResult};
use spchain_core::MinerId;

#[test]
fn eight_bit_target_takes_about_256_attempts() {
    let target = Target::from_leading_zero_bits(8);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut total = 0u64;
    for seed in 0..100u8 {
        let prev = Hash32(rng.gen());
        let penu = Hash32(rng.gen());
        let key = Keypair::from_seed([seed; 32]).public();
        let (_, attempts) = search_nonce(&prev, &penu, &key, &target, rng.gen(), u64::MAX).unwrap();
        total += attempts;
    }
    let mean = total as f64 / 100.0;
    assert!((mean - 256.0).abs() <= 0.3 * 256.0, "mean attempts {mean}");
}

#[test]
fn mined_blocks_satisfy_their_target() {
    let view = ChainView::new(ToyGroup::default_group(), Target::from_leading_zero_bits(6));
    for i in 0..10u32 {
        let key = Keypair::from_seed([i as u8; 32]).public();
        let MineResult::Found { mut block, attempts } =
            mine_keyblock(&view, Vec::new(), MinerId(i), key, view.target(), u64::MAX)
        else {
            panic!("unbounded search");
        };
        assert!(attempts >= 1);
        assert!(check_puzzle(&block));
        block.nonce = block.nonce.wrapping_add(1);
        // A different nonce almost never meets a 6-bit target twice in a row;
        // when it does the block is still consistent with its own hash.
        assert_eq!(check_puzzle(&block), block.target.is_met_by(&block.puzzle_hash()));
    }
}

#[test]
fn bounded_search_can_run_out() {
    let view = ChainView::new(ToyGroup::default_group(), Target::from_leading_zero_bits(40));
    let key = Keypair::from_seed([3; 32]).public();
    assert_eq!(
        mine_keyblock(&view, Vec::new(), MinerId(0), key, view.target(), 50),
        MineResult::Exhausted { attempts: 50 }
    );
}
