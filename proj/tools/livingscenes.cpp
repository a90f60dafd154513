#include <cstdio>

int main() {
    std::puts("livingscenes: command-line frontend not wired up yet");
    return 1;
}
