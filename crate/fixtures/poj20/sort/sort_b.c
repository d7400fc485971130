#include <stdio.h>

static void swap(int *a, int *b) {
  int t = *a;
  *a = *b;
  *b = t;
}

int main(void) {
  int v[8] = {5, 2, 7, 1, 9, 3, 8, 4};
  for (int i = 0; i < 8; i++) {
    int min = i;
    for (int j = i + 1; j < 8; j++) {
      if (v[j] < v[min]) {
        min = j;
      }
    }
    swap(&v[i], &v[min]);
  }
  for (int i = 0; i < 8; i++) {
    printf("%d ", v[i]);
  }
  printf("\n");
  return 0;
}
