//! Functional results must not depend on the array configuration: the
//! grid size, unit kind, link width, buffering, and bandwidth shape the
//! cycle report only. Runs random small GEMMs for every mode across
//! disparate configurations and demands bit-identical output tensors.

use jackmac::datapath::{Mode, ModeName};
use jackmac::formats::ScalarCode;
use jackmac_sim::{gemm_execute_with, AccumulationMode, ArrayConfig, Tensor, UnitKind};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_tensor(mode: &Mode, dims: Vec<u32>, rng: &mut StdRng) -> Tensor {
    let fmt = mode.element_format;
    let n: usize = dims.iter().map(|&d| d as usize).product();
    let elements: Vec<ScalarCode> = (0..n).map(|_| ScalarCode::new(fmt, rng.gen())).collect();
    if fmt.is_mx() {
        let blocks = n / fmt.block_size as usize;
        let shared = (0..blocks).map(|_| rng.gen_range(-6i8..=6)).collect();
        Tensor::new_mx(fmt, dims, elements, shared).unwrap()
    } else {
        Tensor::new_scalar(fmt, dims, elements).unwrap()
    }
}

fn configs() -> Vec<ArrayConfig> {
    let tiny = ArrayConfig {
        rows: 1,
        cols: 2,
        input_link_bits: 4,
        bandwidth_bytes_per_cycle: 3,
        ..ArrayConfig::jack()
    };
    let lopsided = ArrayConfig {
        rows: 64,
        cols: 2,
        ibuf_kb: 16,
        wbuf_kb: 16,
        obuf_kb: 8,
        clock_mhz: 123,
        ..ArrayConfig::jack()
    };
    vec![ArrayConfig::jack(), ArrayConfig::baseline(), tiny, lopsided]
}

#[test]
fn gemm_outputs_are_bit_identical_across_configs() {
    let mut rng = StdRng::seed_from_u64(0x1ACC);
    let mut compared = 0usize;
    for trial in 0..20 {
        for mode in Mode::all() {
            let (m, n, k) = if mode.element_format.is_mx() {
                (
                    rng.gen_range(1..=4),
                    rng.gen_range(1..=4),
                    32 * rng.gen_range(1..=2u32),
                )
            } else {
                (
                    rng.gen_range(1..=5),
                    rng.gen_range(1..=5),
                    rng.gen_range(1..=24),
                )
            };
            let a = random_tensor(&mode, vec![m, k], &mut rng);
            let b = random_tensor(&mode, vec![n, k], &mut rng);
            for acc in [AccumulationMode::Chained16, AccumulationMode::Wide] {
                let mut baseline_bits: Option<Vec<u16>> = None;
                let mut baseline_checksum: Option<String> = None;
                for cfg in configs() {
                    if cfg.unit == UnitKind::Baseline && mode.element_format.is_mx() {
                        continue;
                    }
                    let (c, report) = gemm_execute_with(&a, &b, &cfg, &mode, acc)
                        .unwrap_or_else(|e| panic!("{} on {:?}: {e}", mode.name, cfg));
                    let bits: Vec<u16> = c.elements.iter().map(|e| e.bits).collect();
                    let sum = report.result_checksum.expect("checksum always attached");
                    match (&baseline_bits, &baseline_checksum) {
                        (None, _) => {
                            baseline_bits = Some(bits);
                            baseline_checksum = Some(sum);
                        }
                        (Some(want), Some(want_sum)) => {
                            assert_eq!(
                                &bits, want,
                                "trial {trial}: {} {acc:?} diverged across configs",
                                mode.name
                            );
                            assert_eq!(&sum, want_sum);
                            compared += 1;
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    assert!(compared >= 20 * 7 * 2, "compared only {compared} pairs");
}

#[test]
fn chained_and_wide_agree_exactly_for_integers() {
    // Integer accumulation only differs when a 16-bit partial saturates;
    // with small values the chain is exact, so the two modes coincide.
    let mut rng = StdRng::seed_from_u64(77);
    let mode = Mode::from_name(ModeName::Int8);
    let codes: Vec<ScalarCode> = (0..40)
        .map(|_| ScalarCode::new(mode.element_format, rng.gen_range(-9i8..=9) as u8 as u16))
        .collect();
    let a = Tensor::new_scalar(mode.element_format, vec![2, 10], codes[..20].to_vec()).unwrap();
    let b = Tensor::new_scalar(mode.element_format, vec![2, 10], codes[20..].to_vec()).unwrap();
    let cfg = ArrayConfig::jack();
    let (c1, _) = gemm_execute_with(&a, &b, &cfg, &mode, AccumulationMode::Chained16).unwrap();
    let (c2, _) = gemm_execute_with(&a, &b, &cfg, &mode, AccumulationMode::Wide).unwrap();
    assert_eq!(c1, c2);
}
