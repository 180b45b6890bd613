use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fsmcov_core::fsm::extract_fsm;
use fsmcov_core::hdl::{SourceKind, SourceUnit};
use fsmcov_core::llm::BackendConfig;
use fsmcov_core::loops::{run_testbench_loop, LoopConfig};
use fsmcov_core::mutation::{inject, sample_mutation, MutationKind};
use fsmcov_core::oracle::{check_chunked, observation_plan, simulate_plan, Observation, OracleBackend};

fn benches(c: &mut Criterion) {
    let corpus = fsmcov_bench::corpus(8);
    let units: Vec<SourceUnit> = corpus
        .items
        .iter()
        .map(|i| SourceUnit::new("dut.v", i.rtl_text.clone(), SourceKind::Rtl).unwrap())
        .collect();

    c.bench_function("extract 8 designs", |b| {
        b.iter(|| {
            for u in &units {
                black_box(extract_fsm(&u.parse_module().unwrap()).unwrap());
            }
        })
    });

    let golden = &corpus.items[0].model;
    let plan = observation_plan(golden);
    c.bench_function("simulate observation plan", |b| {
        b.iter(|| black_box(simulate_plan(golden, &plan)))
    });

    c.bench_function("oracle coverage loop", |b| {
        b.iter(|| {
            let mut backend = OracleBackend::new(&BackendConfig::default()).with_golden(golden.clone());
            black_box(run_testbench_loop(&units[0], &mut backend, &LoopConfig::default(), None).unwrap())
        })
    });

    let mu = sample_mutation(golden, 1, &[MutationKind::RetargetTransition]).unwrap();
    let trace = simulate_plan(&inject(golden, &mu).unwrap(), &plan);
    c.bench_function("chunked check, size 10", |b| {
        b.iter(|| black_box(check_chunked(golden, &trace, Observation::StateRegs, 10)))
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
