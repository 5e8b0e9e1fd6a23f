#include <cstdio>
int main(int, char**) { std::printf("placeholder\n"); return 1; }
