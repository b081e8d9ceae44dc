#!/usr/bin/env python3
"""Convert the Libimseti dating dump into the rrs interaction TSV.

Inputs:
  ratings  one rating per line: rater, rated, score (1-10). Comma or
           whitespace separated; lines starting with '%' or '#' are skipped,
           so both ratings.dat and the KONECT out.libimseti file work.
  genders  one user per line: user, gender (M, F or U).

Only male-to-female and female-to-male ratings are kept. Male users form
side A and female users side B, each re-indexed densely in ascending id
order. Every kept rating becomes one directed interaction; a pair is a
match when both directions exist and both scores are >= the threshold.

Output lines: <a_id>\t<b_id>\t<direction>\t<match>, direction 1 for a->b.
Id maps are written next to the output as <out>.a_ids and <out>.b_ids.

Example:
  python3 scripts/libimseti_to_tsv.py ratings.dat gender.dat dating.tsv
  rrs prepare --data dating.tsv --out runs/dating
"""

import argparse
import re
import sys

SPLIT = re.compile(r"[,\s]+")


def rows(path):
    with open(path, encoding="utf-8", errors="replace") as f:
        for line in f:
            line = line.strip()
            if not line or line[0] in "%#":
                continue
            yield SPLIT.split(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("ratings")
    ap.add_argument("genders")
    ap.add_argument("out")
    ap.add_argument("--threshold", type=int, default=8, help="minimum score on both sides for a match")
    args = ap.parse_args()

    gender = {}
    for f in rows(args.genders):
        if len(f) >= 2:
            gender[int(f[0])] = f[1].upper()

    # (male, female) -> {direction: score}, direction 1 = male rated female
    scores = {}
    for f in rows(args.ratings):
        if len(f) < 3:
            continue
        rater, rated, score = int(f[0]), int(f[1]), int(float(f[2]))
        g_rater, g_rated = gender.get(rater), gender.get(rated)
        if g_rater == "M" and g_rated == "F":
            scores.setdefault((rater, rated), {})[1] = score
        elif g_rater == "F" and g_rated == "M":
            scores.setdefault((rated, rater), {})[0] = score

    males = sorted({a for a, _ in scores})
    females = sorted({b for _, b in scores})
    a_index = {u: i for i, u in enumerate(males)}
    b_index = {u: i for i, u in enumerate(females)}

    matches = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as out:
        for (a, b), by_dir in sorted(scores.items()):
            match = int(len(by_dir) == 2 and min(by_dir.values()) >= args.threshold)
            matches += match
            for direction in sorted(by_dir, reverse=True):
                out.write(f"{a_index[a]}\t{b_index[b]}\t{direction}\t{match}\n")
    for suffix, ids in ((".a_ids", males), (".b_ids", females)):
        with open(args.out + suffix, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(f"{i}\t{u}\n" for i, u in enumerate(ids))

    print(f"{len(males)} A-side users, {len(females)} B-side users, {len(scores)} pairs, {matches} matches",
          file=sys.stderr)


if __name__ == "__main__":
    main()
