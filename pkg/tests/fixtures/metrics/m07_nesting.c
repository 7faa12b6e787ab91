#include <stdio.h>

int classify(int x) {
  switch (x) {
  case 0:
    return 0;
  default:
    if (x < 0)
      return -1;
    else if (x < 10)
      return 1;
    else
      return 2;
  }
}

int main(void) {
  int i = 0, n = 0;
  do {
    for (int j = 0; j < 3; j++) {
      while (n < j)
        n++;
    }
    i++;
  } while (i < 4);
  printf("%d %d\n", classify(n), i);
  return 0;
}
