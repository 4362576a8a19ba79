/// Name, input, layer, resolution divisor and depth of every row of the
/// reference layer table, transcribed by hand.
pub const TABLE: [(&str, &str, &str, usize, usize); 32] = [
    ("enc-1-1", "input", "Conv(16,3,2,1)", 2, 16),
    ("enc-1-2", "enc-1-1", "Conv(16,3,1,1)", 2, 16),
    ("enc-2-1", "enc-1-2", "Conv(32,3,2,1)", 4, 32),
    ("enc-2-2", "enc-2-1", "Conv(32,3,1,1)", 4, 32),
    ("enc-3-1", "enc-2-2", "Conv(64,3,2,1)", 8, 64),
    ("enc-3-2", "enc-3-1", "Conv(64,3,1,1)", 8, 64),
    ("enc-4-1", "enc-3-2", "Conv(96,3,2,1)", 16, 96),
    ("enc-4-2", "enc-4-1", "Conv(96,3,1,1)", 16, 96),
    ("enc-5-1", "enc-4-2", "Conv(128,3,2,1)", 32, 128),
    ("enc-5-2", "enc-5-1", "Conv(128,3,1,1)", 32, 128),
    ("enc-6-1", "enc-5-2", "Conv(196,3,2,1)", 64, 196),
    ("enc-6-2", "enc-6-1", "Conv(196,3,1,1)", 64, 196),
    ("bottleneck", "enc-6-2", "Conv(196,1,1,1)", 64, 196),
    ("skip-5-6", "enc-5-2", "Conv(196,1,1,1) MaxPool(2,2)", 64, 196),
    ("skip-4-6", "enc-4-2", "Conv(196,1,1,1) MaxPool(4,4)", 64, 196),
    ("dec-6-2", "bottleneck+skip-5-6+skip-4-6", "Conv(196,3,1,1)", 64, 196),
    ("dec-5-1", "dec-6-2", "UpConv(128,4,2,1)", 32, 128),
    ("skip-4-5", "enc-4-2", "Conv(128,1,1,1) MaxPool(2,2)", 32, 128),
    ("skip-3-5", "enc-3-2", "Conv(128,1,1,1) MaxPool(4,4)", 32, 128),
    (
        "dec-5-2",
        "dec-5-1+enc-5-2+skip-4-5+skip-3-5",
        "Conv(128,3,1,1)",
        32,
        128,
    ),
    ("dec-4-1", "dec-5-2", "UpConv(96,4,2,1)", 16, 96),
    ("skip-3-4", "enc-3-2", "Conv(96,1,1,1) MaxPool(2,2)", 16, 96),
    ("skip-2-4", "enc-2-2", "Conv(96,1,1,1) MaxPool(4,4)", 16, 96),
    ("dec-4-2", "dec-4-1+enc-4-2+skip-3-4+skip-2-4", "Conv(96,3,1,1)", 16, 96),
    ("dec-3-1", "dec-4-2", "UpConv(64,4,2,1)", 8, 64),
    ("skip-2-3", "enc-2-2", "Conv(64,1,1,1) MaxPool(2,2)", 8, 64),
    ("skip-1-3", "enc-1-2", "Conv(64,1,1,1) MaxPool(4,4)", 8, 64),
    ("dec-3-2", "dec-3-1+enc-3-2+skip-2-3+skip-1-3", "Conv(64,3,1,1)", 8, 64),
    ("dec-2-1", "dec-3-2", "UpConv(32,4,2,1)", 4, 32),
    ("skip-1-2", "enc-1-2", "Conv(32,1,1,1) MaxPool(2,2)", 4, 32),
    ("skip-0-2", "input", "Conv(32,1,1,1) MaxPool(4,4)", 4, 32),
    ("dec-2-2", "dec-2-1+enc-2-2+skip-1-2+skip-0-2", "Conv(32,3,1,1)", 4, 32),
];
