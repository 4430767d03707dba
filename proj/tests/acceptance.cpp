// Acceptance suite placeholder; filled in alongside the harness.
int main() { return 1; }
