//! Seeded inputs shared by the benchmarks.

use codeloop_core::image::solid_png;
use codeloop_core::session::{ExecResult, Message, Role, SessionTrace, Turn};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TEMPLATES: &[&str] = &[
    "img = image_clue_0.crop(({a}, {b}, {c}, {d}))\nplt.imshow(img)\nplt.show()\n",
    "rotated = image_clue_0.rotate({a}, expand=True)\nplt.imshow(rotated)\nplt.show()\n",
    "from PIL import ImageEnhance\nbright = ImageEnhance.Contrast(image_clue_0).enhance(1.{a})\nplt.imshow(bright)\nplt.show()\n",
    "import numpy as np\narr = np.array(image_clue_0.convert('L'))\nplt.hist(arr.ravel(), bins={a})\nplt.show()\n",
    "import cv2\nimport numpy as np\ngray = cv2.cvtColor(np.array(image_clue_0), cv2.COLOR_RGB2GRAY)\nedges = cv2.Canny(gray, {a}, {b})\nplt.imshow(edges)\nplt.show()\n",
    "import easyocr\nreader = easyocr.Reader(['en'])\nprint(reader.readtext(np.array(image_clue_0)))\n",
    "fig, ax = plt.subplots()\nax.imshow(image_clue_0)\nax.axhline({a}, color='red')\nax.axvline({b}, color='red')\nplt.show()\n",
    "import numpy as np\nregion = np.array(image_clue_0)[{a}:{c}, {b}:{d}]\nprint(region.mean(), region.std())\n",
    "w, h = image_clue_0.size\nprint(w * {a} / h)\n",
];

/// `n` plausible snippets drawn from fixed templates with seeded numbers.
pub fn snippet_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = TEMPLATES.choose(&mut rng).expect("templates");
            let a: u32 = rng.random_range(1..200);
            let b: u32 = rng.random_range(1..200);
            t.replace("{a}", &a.to_string())
                .replace("{b}", &b.to_string())
                .replace("{c}", &(a + 100).to_string())
                .replace("{d}", &(b + 100).to_string())
        })
        .collect()
}

/// A model response with `blocks` fenced code blocks between prose paragraphs.
pub fn model_response(blocks: usize, seed: u64) -> String {
    let mut out = String::from("Let me look at the image more closely before answering.\n");
    for code in snippet_corpus(blocks, seed) {
        out.push_str("<code>\n```python\n");
        out.push_str(&code);
        out.push_str("```\n</code>\nThe output will tell us where to look next.\n");
    }
    out
}

/// An answered trace with `turns` code turns, one figure per turn.
pub fn trace(turns: usize, seed: u64) -> SessionTrace {
    let mut t = SessionTrace::new(format!("bench-{seed}"), "Which object is closer?", vec![solid_png(64, 48, [90, 120, 200])]);
    t.benchmark = Some("bench".into());
    for (i, code) in snippet_corpus(turns, seed).into_iter().enumerate() {
        let mut r = ExecResult::ok(format!("({}, {})\n", 10 + i, 20 + i));
        r.images.push(solid_png(32, 24, [i as u8, 0, 0]));
        let mut clue = Message::text(Role::User, format!("<interpreter>\n{}</interpreter>", r.stdout));
        clue.parts.push(codeloop_core::ContentPart::image(r.images[0].clone()));
        t.turns.push(Turn {
            index: i,
            model_text: format!("<code>\n{code}</code>"),
            code_blocks: vec![code],
            exec_results: vec![r],
            clue_message: Some(clue),
            warnings: Vec::new(),
        });
    }
    t.turns.push(Turn {
        index: turns,
        model_text: "<answer>\\boxed{A}</answer>".into(),
        code_blocks: Vec::new(),
        exec_results: Vec::new(),
        clue_message: None,
        warnings: Vec::new(),
    });
    t.final_answer = Some("A".into());
    t.termination = codeloop_core::Termination::Answered;
    t
}
