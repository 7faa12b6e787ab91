#include <stdio.h>

const int LIMIT = 5;
static const char *greeting = "hi";
char *const fixed = 0;
int counter, total = 0;
double weights[3] = {0.5, 0.25, 0.25};

int main(void) {
  counter = LIMIT;
  printf("%s %d\n", greeting, counter);
  return 0;
}
