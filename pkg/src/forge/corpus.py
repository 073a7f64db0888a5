"""Reference kernel sources used by the integration tests and demos.

Three families live here. CORPUS holds ten self-contained programs whose
observable results do not depend on thread interleaving, so a device run
and the sequential host fallback must agree byte for byte. parity_pair
builds two spellings of the same atomic kernel, one through the pragma
construct and one through the direct builtin, which must compile to the
same normalized IR. probe_source builds single-cell atomic probes with
per-thread operation lists for schedule randomization tests.
"""

from __future__ import annotations

COUNTER_ADD = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    u32 g;
    u32 old;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    old = __atomic_add(cell, g + 1);
  }
}

void main() {
  cell[0] = 0;
  kernel(cell);
  print(cell[0]);
}
"""

DISJOINT_SQUARES = """\
u32 out[8];

void kernel(u32 *out) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    u32 g;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    out[g] = g * g;
  }
}

void main() {
  u32 i;
  kernel(out);
  i = 0;
  while (i < 8) {
    print(out[i]);
    i = i + 1;
  }
}
"""

STATIC_DOUBLE = """\
u32 out[100];

void kernel(u32 *out) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    i64 bounds[2];
    i64 i;
    u32 g;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    for_static_init(0, 99, (i64) g, 8, bounds);
    i = bounds[0];
    while (i <= bounds[1]) {
      out[i] = (u32) (2 * i);
      i = i + 1;
    }
  }
}

void main() {
  u32 i;
  kernel(out);
  i = 0;
  while (i < 100) {
    print(out[i]);
    i = i + 1;
  }
}
"""

MAX_REDUCE = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    u32 g;
    u32 old;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    old = __atomic_max(cell, (g * 37) % 101);
  }
}

void main() {
  cell[0] = 0;
  kernel(cell);
  print(cell[0]);
}
"""

MIN_REDUCE = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(4) thread_limit(2)
  {
    u32 g;
    u32 old;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    old = __atomic_min(cell, (g * 53 + 11) % 97);
  }
}

void main() {
  cell[0] = 123456;
  kernel(cell);
  print(cell[0]);
}
"""

INC_RING = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    u32 old;
    old = __atomic_inc(cell, 7);
  }
}

void main() {
  cell[0] = 0;
  kernel(cell);
  print(cell[0]);
}
"""

XCHG_SAME = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(1) thread_limit(8)
  {
    u32 old;
    old = __atomic_xchg(cell, 7);
  }
}

void main() {
  cell[0] = 3;
  kernel(cell);
  print(cell[0]);
}
"""

CAS_MISS = """\
u32 cell[1];
u32 olds[8];

void kernel(u32 *cell, u32 *olds) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    u32 g;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    olds[g] = __atomic_cas(cell, 999, 5);
  }
}

void main() {
  u32 i;
  cell[0] = 0;
  kernel(cell, olds);
  print(cell[0]);
  i = 0;
  while (i < 8) {
    print(olds[i]);
    i = i + 1;
  }
}
"""

QUERY_GRID = """\
u32 out[8];
u32 dims[2];

void kernel(u32 *out, u32 *dims) {
  #pragma omp target num_teams(4) thread_limit(2)
  {
    u32 g;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    out[g] = omp_team_id() * 100 + omp_thread_id();
    if (g == 0) {
      dims[0] = omp_num_teams();
      dims[1] = omp_num_threads();
    }
  }
}

void main() {
  u32 i;
  kernel(out, dims);
  i = 0;
  while (i < 8) {
    print(out[i]);
    i = i + 1;
  }
  print(dims[0]);
  print(dims[1]);
}
"""

PARTIAL_SUMS = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(2) thread_limit(4)
  {
    i64 bounds[2];
    i64 i;
    u32 g;
    u32 part;
    u32 old;
    g = omp_team_id() * omp_num_threads() + omp_thread_id();
    for_static_init(1, 100, (i64) g, 8, bounds);
    part = 0;
    i = bounds[0];
    while (i <= bounds[1]) {
      part = part + (u32) i;
      i = i + 1;
    }
    old = __atomic_add(cell, part);
  }
}

void main() {
  cell[0] = 0;
  kernel(cell);
  print(cell[0]);
}
"""

CORPUS: tuple[tuple[str, str], ...] = (
    ("counter_add", COUNTER_ADD),
    ("disjoint_squares", DISJOINT_SQUARES),
    ("static_double", STATIC_DOUBLE),
    ("max_reduce", MAX_REDUCE),
    ("min_reduce", MIN_REDUCE),
    ("inc_ring", INC_RING),
    ("xchg_same", XCHG_SAME),
    ("cas_miss", CAS_MISS),
    ("query_grid", QUERY_GRID),
    ("partial_sums", PARTIAL_SUMS),
)

# ---- construct/builtin parity

_CONSTRUCT_BODIES = {
    "add": """\
  #pragma omp atomic capture seq_cst
  {
    v = *x;
    *x += e;
  }
""",
    "xchg": """\
  #pragma omp atomic capture seq_cst
  {
    v = *x;
    *x = e;
  }
""",
    "max": """\
  #pragma omp atomic compare capture seq_cst
  {
    v = *x;
    if (*x < e) {
      *x = e;
    }
  }
""",
    "min": """\
  #pragma omp atomic compare capture seq_cst
  {
    v = *x;
    if (*x > e) {
      *x = e;
    }
  }
""",
    "cas": """\
  #pragma omp atomic compare capture seq_cst
  {
    v = *x;
    if (*x == e) {
      *x = d;
    }
  }
""",
}

_BUILTIN_CALLS = {
    "add": "__atomic_add(x, e)",
    "xchg": "__atomic_xchg(x, e)",
    "max": "__atomic_max(x, e)",
    "min": "__atomic_min(x, e)",
    "cas": "__atomic_cas(x, e, d)",
}

PARITY_KINDS = ("add", "max", "min", "xchg", "cas")


def parity_pair(kind: str) -> tuple[str, str]:
    """Two spellings of one captured atomic update on a single cell.

    Both sources define the same kernel: the first goes through the
    pragma construct, the second calls the builtin directly. Their
    device IR must normalize identically.
    """
    if kind not in _CONSTRUCT_BODIES:
        raise ValueError(f"unknown atomic kind '{kind}'")
    extra = ", u32 d" if kind == "cas" else ""
    head = f"""\
#pragma omp begin declare target
u32 probe(u32 *x, u32 e{extra}) {{
  u32 v;
"""
    call = "probe(out, 3, 9)" if kind == "cas" else "probe(out, 3)"
    foot = f"""\
  return v;
}}
#pragma omp end declare target

u32 box[1];

void device_entry(u32 *out) {{
  #pragma omp target num_teams(1) thread_limit(2)
  {{
    u32 r;
    r = {call};
  }}
}}

void main() {{
  box[0] = 2;
  device_entry(box);
  print(box[0]);
}}
"""
    construct = head + _CONSTRUCT_BODIES[kind] + foot
    builtin = head + f"  v = {_BUILTIN_CALLS[kind]};\n" + foot
    return construct, builtin


# ---- schedule randomization probes

PROBE_KINDS = ("add", "max", "xchg", "cas", "inc")

_PROBE_CALLS = {
    "add": "__atomic_add(c, {e})",
    "max": "__atomic_max(c, {e})",
    "xchg": "__atomic_xchg(c, {e})",
    "cas": "__atomic_cas(c, {e}, {d})",
    "inc": "__atomic_inc(c, {e})",
}


def probe_source(teams: int, threads: int,
                 programs: list[list[tuple[str, int, int]]]) -> str:
    """One kernel running a fixed atomic program per thread on one cell.

    programs[g] lists (kind, e, d) operations for global thread g; every
    captured old value lands in its own slot of the olds buffer, in
    per-thread program order. len(programs) must equal teams * threads.
    """
    if len(programs) != teams * threads:
        raise ValueError("one program per thread is required")
    total = sum(len(p) for p in programs)
    lines = [f"u32 cell[1];\nu32 olds[{max(total, 1)}];\n"]
    lines.append("void kernel(u32 *c, u32 *olds) {")
    lines.append(f"  #pragma omp target num_teams({teams}) thread_limit({threads})")
    lines.append("  {")
    lines.append("    u32 g;")
    lines.append("    g = omp_team_id() * omp_num_threads() + omp_thread_id();")
    slot = 0
    for g, program in enumerate(programs):
        if not program:
            continue
        lines.append(f"    if (g == {g}) {{")
        for kind, e, d in program:
            call = _PROBE_CALLS[kind].format(e=e, d=d)
            lines.append(f"      olds[{slot}] = {call};")
            slot += 1
        lines.append("    }")
    lines.append("  }")
    lines.append("}")
    lines.append("")
    lines.append("void main() {")
    lines.append("  cell[0] = 0;")
    lines.append("  kernel(cell, olds);")
    lines.append("}")
    return "\n".join(lines) + "\n"
