"""Walk through the lexical similarity features on two small Java methods.

Run: python3 demos/01_similarity_features.py
"""

from clonefuse.lexical import IdfTable, feature_dict, tokenize

LEFT = """
public int sumAbove(int[] xs, int floor) {
    int total = 0;
    for (int i = 0; i < xs.length; i++) {
        if (xs[i] > floor) {
            total += xs[i];
        }
    }
    return total;
}
"""

# Same logic, renamed identifiers, one literal tweak: a type-2-ish variant.
RIGHT = """
public int tallyOver(int[] nums, int cutoff) {
    int acc = 0;
    for (int k = 0; k < nums.length; k++) {
        if (nums[k] > cutoff) {
            acc += nums[k];
        }
    }
    return acc;
}
"""

DISTRACTOR = """
public String describe(Map<String, Integer> ages) {
    StringBuilder sb = new StringBuilder();
    for (String name : ages.keySet()) {
        sb.append(name).append(": ").append(ages.get(name)).append("\\n");
    }
    return sb.toString();
}
"""


def main() -> None:
    a, b, c = tokenize(LEFT), tokenize(RIGHT), tokenize(DISTRACTOR)
    print(f"left tokens: {len(a.tokens)}, right tokens: {len(b.tokens)}")
    print("first 12 of left:", " ".join(a.tokens[:12]))
    print()

    # The idf table is fitted on whatever corpus you have; here, all three.
    idf = IdfTable().fit([a, b, c])
    rare = sorted(idf.weight(t) for t in ("int", "sumAbove"))
    print(f"idf range: common token {rare[0]:.3f} vs unique name {rare[1]:.3f}")
    print()

    print("renamed variant vs the original:")
    for name, value in feature_dict(a, b, idf).items():
        print(f"  {name:>16} = {value:.4f}")
    print()

    unrelated = feature_dict(a, c, idf)
    print("unrelated method, for contrast:")
    for name in ("jaccard", "cosine", "levenshtein_norm", "tfidf_cosine"):
        print(f"  {name:>16} = {unrelated[name]:.4f}")


if __name__ == "__main__":
    main()
