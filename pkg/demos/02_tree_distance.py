"""Parse two methods and compare their shapes with tree edit distance.

Run: python3 demos/02_tree_distance.py
"""

from collections import Counter

from clonefuse.syntax import (
    STRUCTURAL_FIELDS,
    parse,
    shape_statistics,
    structural_vector,
    subtree_jaccard,
    tree_edit_distance,
)

FOR_LOOP = """
public int find(String[] items, String key) {
    for (int i = 0; i < items.length; i++) {
        if (items[i].equals(key)) {
            return i;
        }
    }
    return -1;
}
"""

# Same behavior rebuilt around a while loop: identical leaves, new skeleton.
WHILE_LOOP = """
public int find(String[] items, String key) {
    int i = 0;
    while (i < items.length) {
        if (items[i].equals(key)) {
            return i;
        }
        i++;
    }
    return -1;
}
"""


def main() -> None:
    a, b = parse(FOR_LOOP), parse(WHILE_LOOP)

    for name, tree in (("for-loop", a), ("while-loop", b)):
        stats = shape_statistics(tree)
        kinds = Counter(n.kind for n in tree.nodes)
        print(f"{name}: {stats['node_count']} nodes, depth {stats['max_depth']}, "
              f"logical density {stats['logical_density']:.3f}")
        print("  top kinds:", ", ".join(f"{k}x{n}" for k, n in kinds.most_common(5)))

    print()
    print(f"tree edit distance: {tree_edit_distance(a, b)}")
    print(f"shared-subtree jaccard: {subtree_jaccard(a, b):.3f}")

    result = structural_vector(a, b)
    print()
    print("pairwise structural vector (the model input):")
    for name, value in zip(STRUCTURAL_FIELDS, result.vector):
        print(f"  {name:>18} = {value:.4f}")

    identical = structural_vector(a, a)
    print()
    print("a tree against itself:", [round(float(v), 3) for v in identical.vector])


if __name__ == "__main__":
    main()
