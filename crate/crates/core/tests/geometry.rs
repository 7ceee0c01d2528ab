use proptest::prelude::*;
use webnav_core::render::{patchify, rasterize, temporal_stack, unpatchify, Frame, FRAME_SIZE, PATCHES_PER_FRAME};
use webnav_core::tasks::{instantiate, register_builtin_tasks, BUILTIN_TASKS};

fn frame() -> impl Strategy<Value = Frame> {
    prop::collection::vec(any::<u8>(), FRAME_SIZE * FRAME_SIZE * 3)
        .prop_map(|px| Frame::from_raw(FRAME_SIZE, FRAME_SIZE, px).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patches_reconstruct_the_frame(f in frame()) {
        let grid = patchify(&f).unwrap();
        prop_assert_eq!(grid.len(), PATCHES_PER_FRAME);
        prop_assert_eq!(unpatchify(&grid).unwrap(), f);
    }

    #[test]
    fn token_count_scales_with_history(h in 1usize..=3, n in 0usize..=3) {
        let frames: Vec<Frame> = (0..n.min(h)).map(|_| Frame::white()).collect();
        prop_assert_eq!(temporal_stack(&frames, h).unwrap().len(), h * 196);
    }

    #[test]
    fn ppm_round_trips(f in frame()) {
        prop_assert_eq!(Frame::from_ppm(&f.to_ppm()).unwrap(), f);
    }
}

#[test]
fn task_frames_are_padded_and_pure() {
    let registry = register_builtin_tasks();
    for name in BUILTIN_TASKS {
        for seed in 0..50 {
            let tree = instantiate(&registry, name, 0, seed).unwrap().tree;
            let frame = rasterize(&tree);
            assert!(frame.is_padded(), "{name}/{seed}");
            assert_eq!(frame, rasterize(&tree));
        }
    }
}
