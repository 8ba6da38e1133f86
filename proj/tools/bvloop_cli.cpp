#include <cstdio>
int main() { std::puts("bvloop"); return 0; }
