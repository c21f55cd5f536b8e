use codeloop_bench::model_response;
use codeloop_core::image::solid_png;
use codeloop_core::protocol::{Frame, FrameStatus};
use codeloop_core::tags::{classify, extract_boxed, wrap_interpreter};
use codeloop_core::ExecResult;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn tags(c: &mut Criterion) {
    let mut g = c.benchmark_group("classify");
    for blocks in [1, 4, 16] {
        let text = model_response(blocks, 7);
        g.throughput(Throughput::Bytes(text.len() as u64));
        g.bench_with_input(BenchmarkId::from_parameter(blocks), &text, |b, t| b.iter(|| classify(black_box(t))));
    }
    g.finish();

    let nested = format!("Reasoning. {}\\boxed{{{}x{}}} done", "{a}".repeat(50), "{".repeat(40), "}".repeat(40));
    c.bench_function("extract_boxed/nested", |b| b.iter(|| extract_boxed(black_box(&nested))));

    let mut r = ExecResult::ok("line\n".repeat(200));
    r.stderr = "warning\n".into();
    c.bench_function("wrap_interpreter", |b| b.iter(|| wrap_interpreter(black_box(&r))));
}

fn frames(c: &mut Criterion) {
    let fig = solid_png(640, 480, [10, 20, 30]).to_base64();
    let frame = Frame::result(9, FrameStatus::Ok, "x\n".repeat(100), String::new(), vec![fig]);
    let line = frame.encode();
    c.bench_function("frame/encode", |b| b.iter(|| black_box(&frame).encode()));
    c.bench_function("frame/decode", |b| b.iter(|| Frame::decode(black_box(&line)).unwrap()));
}

criterion_group!(benches, tags, frames);
criterion_main!(benches);
